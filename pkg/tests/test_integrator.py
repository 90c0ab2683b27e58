import math

import numpy as np
import pytest

from per3bp.errors import BlowUp
from per3bp.integrator import (
    IntegratorConfig,
    RigorousOrbit,
    integrate_fast,
    integrate_rigorous,
    inverse_enclosure,
    rough_enclosure,
    taylor_step,
)
from per3bp.ival import Interval
from per3bp.jets import Jet, JetSpec
from per3bp.model import hamiltonian

MU = 2.089e-4
Z0 = np.array([-0.9513385, 0.0, 0.0, -1.02124587611, 0.0])


def test_zero_duration_is_identity():
    enc = integrate_rigorous(Z0, 0.0, 0.0)
    for i in range(5):
        assert enc.state[i].contains(Z0[i])
        assert enc.state[i].width() < 1e-15
    assert enc.jac.entry(0, 0).contains(1.0)
    assert enc.jac.entry(0, 1).contains(0.0)


def test_fast_roundtrip():
    z1 = integrate_fast(Z0, 0.0, 0.8, MU)
    back = integrate_fast(z1, 0.0, -0.8, MU)
    assert np.max(np.abs(back - Z0)) < 1e-12


def test_fast_against_scipy():
    from scipy.integrate import solve_ivp

    from per3bp.model import vector_field

    def rhs(t, z):
        return vector_field(z[0], z[1], z[2], z[3], t, MU, 1e-5)[:4]

    sol = solve_ivp(
        rhs, (0.0, 1.2), Z0[:4], method="DOP853", rtol=1e-13, atol=1e-13
    )
    got = integrate_fast(Z0, 1e-5, 1.2, MU)
    assert np.max(np.abs(got[:4] - sol.y[:, -1])) < 1e-10


def test_fast_jacobian_matches_finite_differences():
    _, J = integrate_fast(Z0, 0.0, 0.5, MU, jac=True)
    h = 1e-7
    for k in range(4):
        dz = np.zeros(5)
        dz[k] = h
        fp = integrate_fast(Z0 + dz, 0.0, 0.5, MU)
        fm = integrate_fast(Z0 - dz, 0.0, 0.5, MU)
        fd = (fp - fm) / (2 * h)
        assert np.max(np.abs(J[:5, k] - fd)) < 1e-6
    # eccentricity column
    fp = integrate_fast(Z0, h, 0.5, MU)
    fm = integrate_fast(Z0, 0.0, 0.5, MU)
    fd = (fp - fm) / h
    assert np.max(np.abs(J[:5, 5] - fd)) < 1e-5


def test_rigorous_contains_fast_endpoint():
    enc = integrate_rigorous(Z0, 0.0, 0.7, mu=MU)
    zf = integrate_fast(Z0, 0.0, 0.7, MU)
    for i in range(5):
        assert enc.state[i].contains(zf[i])


def test_rigorous_box_contains_sampled_endpoints():
    w = 1e-9
    box = [Interval(z - w, z + w) for z in Z0]
    enc = integrate_rigorous(box, Interval(0.0, 1e-5), 0.4, mu=MU)
    rng = np.random.default_rng(3)
    for _ in range(12):
        z = Z0 + rng.uniform(-w, w, 5)
        eps = rng.uniform(0.0, 1e-5)
        zf = integrate_fast(z, eps, 0.4, MU)
        for i in range(5):
            assert enc.state[i].contains(zf[i])


def test_rigorous_jacobian_contains_fast():
    enc = integrate_rigorous(Z0, 0.0, 0.5, mu=MU)
    _, J = integrate_fast(Z0, 0.0, 0.5, MU, jac=True)
    for i in range(5):
        for j in range(6):
            assert enc.jac.entry(i, j).inflate(1e-9).contains(J[i, j])


def test_energy_stays_enclosed_over_long_run():
    orb = RigorousOrbit(Z0, 0.0, mu=MU)
    h_start = orb.energy_enclosure()
    orb.run(2.0)
    h_end = orb.energy_enclosure()
    assert h_end.intersects(h_start)
    assert h_end.width() < 1e-11


def test_step_times_accumulate_exactly():
    orb = RigorousOrbit(Z0, 0.0, mu=MU)
    orb.run(0.4)
    # interior steps snap to a dyadic grid and the last one lands exactly
    assert orb.time == 0.4
    assert orb.last_step.h > 0.0


def test_rough_enclosure_contains_trajectory_samples():
    spec = JetSpec(6, interval=True)
    vals = [*Z0, 0.0]
    jets = [Jet.seed(spec, Interval(v), i) for i, v in enumerate(vals)]
    h = 0.02
    rough = rough_enclosure(jets, MU, Interval(0.0, h))
    assert rough is not None
    for tau in np.linspace(0.0, h, 7):
        z = integrate_fast(Z0, 0.0, tau, MU) if tau > 0 else Z0
        for i in range(5):
            assert rough[i].val().contains(z[i])


def test_step_remainder_validity():
    spec = JetSpec(0, interval=True)
    vals = [*Z0, 0.0]
    jets = [Jet.const(spec, Interval(v)) for v in vals]
    res = taylor_step(jets, MU, IntegratorConfig())
    for tau in (0.0, res.h / 3, res.h):
        ref = integrate_fast(Z0, 0.0, tau, MU) if tau > 0 else Z0
        vals_tau = res.eval(tau)
        for i in range(5):
            assert vals_tau[i].val().contains(ref[i])


def test_inverse_enclosure_roundtrip():
    rng = np.random.default_rng(5)
    A = rng.normal(size=(6, 6)) + 6 * np.eye(6)
    inv = inverse_enclosure(A)
    prod = inv @ __import__("per3bp.ival", fromlist=["IMat"]).IMat(A)
    for i in range(6):
        for j in range(6):
            assert prod.entry(i, j).contains(1.0 if i == j else 0.0)


def test_blowup_budget_raises():
    wide = [Interval(z - 0.02, z + 0.02) for z in Z0]
    with pytest.raises(BlowUp):
        integrate_rigorous(
            wide, 0.0, 3.0, cfg=IntegratorConfig(blowup_budget=1e-3), mu=MU
        )


def test_energy_width_over_period_scale_run():
    orb = RigorousOrbit(Z0, 0.0, mu=MU)
    orb.run(6.3)
    h = orb.energy_enclosure()
    assert h.contains(hamiltonian(*Z0, MU, 0.0))
    assert h.width() < 1e-9
