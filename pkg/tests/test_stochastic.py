import math
from types import SimpleNamespace

import numpy as np
import pytest

from per3bp.certify import default_strips
from per3bp.errors import InsufficientSample, TrackingLost
from per3bp.stochastic import (
    ClassTable,
    K_CAP,
    class_routes,
    donsker_check,
    fly_route,
    make_schedule,
    steer_orbit,
    synthetic_paths,
    time_scale,
)


def test_schedule_increments_exact():
    s = make_schedule(0.5, 0.1, 0.15, 1e-2, seed=3)
    assert s.K == 100
    up = 0.1 * 1e-2 + 0.15 * math.sqrt(1e-2)
    dn = 0.1 * 1e-2 - 0.15 * math.sqrt(1e-2)
    for inc in np.diff(s.levels):
        assert abs(inc - up) < 1e-15 or abs(inc - dn) < 1e-15
    assert len(s.omega) == s.K
    assert set(np.unique(s.omega)) <= {-1, 1}


def test_schedule_sigma_zero_is_deterministic_ramp():
    s = make_schedule(0.2, 0.3, 0.0, 1e-3, seed=9)
    expect = 0.2 + 0.3 * 1e-3 * np.arange(s.K + 1)
    assert np.allclose(s.levels, expect, atol=0, rtol=1e-14)


def test_schedule_cap_and_validation():
    assert make_schedule(0, 0, 1, 1e-6, seed=0).K == K_CAP
    assert make_schedule(0, 0, 1, 1e-6, seed=0, cap=50).K == 50
    with pytest.raises(ValueError):
        make_schedule(0, 0, 1, 0.0)
    with pytest.raises(ValueError):
        make_schedule(0, 0, -1.0, 1e-2)


def test_coin_flip_statistics():
    vals = [make_schedule(0, 0, 1, 1e-2, seed=i).omega.sum() / 10.0
            for i in range(10_000)]
    assert abs(np.mean(vals)) < 3.0 / math.sqrt(10_000) * 2.0


def test_stopped_path_constant_after_tau():
    paths = synthetic_paths(0.5, 0.0, 1.0, 1e-2, 50, seed=4,
                            band=(0.3, 0.7))
    stopped = [p for p in paths if p.stopped]
    assert stopped, "tight band should stop some walks"
    for p in stopped:
        j = int(round(p.tau * (len(p.X) - 1)))
        assert np.all(p.X[j:] == p.X[j])
        assert not (p.band[0] < p.X[j] < p.band[1])


def test_time_scale():
    assert time_scale(1e-2) == 1e4
    assert time_scale(1e-2, gamma=2.0, alt=True) == 2.0 * 1e3


def _toy_tables(strips, responses, spread=0.0):
    out = {}
    for cls, d in responses.items():
        th = np.linspace(*strips[cls[0]].theta_range, 5)
        ramp = np.linspace(-spread, spread, 5)
        out[cls] = [ClassTable(SimpleNamespace(cls=cls, k=50), 1e-2, th,
                               d * (1.0 + ramp),
                               strips[cls[1]].center_theta * np.ones(5),
                               19.0)]
    return out


RESPONSES = {"uu": 1.4e-5, "dd": -1.4e-5, "ud": 1e-8, "du": -1e-8}


def test_steer_tracks_flat_tables_exactly():
    strips = default_strips()
    seqs = _toy_tables(strips, RESPONSES)
    sch = make_schedule(0.5, 0.1, 0.15, 1e-2, seed=7)
    path, log = steer_orbit(sch, strips, seqs)
    assert np.allclose(path.X, sch.levels)
    assert not path.stopped
    # direction flips force transfer transitions between the strips
    assert any(t.cls in ("ud", "du") for t in log)
    # every signed step is realised by the matching class
    for t in log:
        if t.cls == "uu":
            assert sch.omega[t.step - 1] == 1
        if t.cls == "dd":
            assert sch.omega[t.step - 1] == -1


def test_steer_constant_schedule_stays_in_band():
    strips = default_strips()
    seqs = _toy_tables(strips, RESPONSES, spread=0.1)
    sch = make_schedule(0.5, 0.0, 0.0, 1e-2, seed=1)
    path, _ = steer_orbit(sch, strips, seqs, band=(0.45, 0.55))
    assert not path.stopped
    assert np.all((path.X > 0.45) & (path.X < 0.55))


def test_steer_certified_bounds_violation():
    strips = default_strips()
    bad = dict(RESPONSES, dd=+1.4e-5)  # wrong sign
    seqs = _toy_tables(strips, bad)
    sch = make_schedule(0.5, 0.0, 0.15, 1e-2, seed=2)
    with pytest.raises(TrackingLost) as err:
        steer_orbit(sch, strips, seqs, bounds=(1e-3, 1e-2))
    assert err.value.step is not None


def test_steer_band_tracking_violation():
    strips = default_strips()
    seqs = _toy_tables(strips, RESPONSES, spread=0.5)
    sch = make_schedule(0.5, 0.0, 0.15, 1e-2, seed=2)
    with pytest.raises(TrackingLost):
        steer_orbit(sch, strips, seqs, track_M=1e-12)


def test_donsker_synthetic_walks_pass_ks():
    paths = synthetic_paths(0.5, 0.1, 0.15, 1e-4, 1000, seed=11)
    rep = donsker_check(paths, 0.1, 0.15, increments_per_path=5)
    rung = rep["rungs"][0]
    assert rung["p_ks"] > 0.01
    assert abs(rung["terminal_mean"] - 0.1) < 3.0 * rung["terminal_se"]


def test_donsker_sigma_zero_ramp_variance():
    paths = synthetic_paths(0.0, 0.2, 0.0, 1e-3, 200, seed=5)
    rep = donsker_check(paths, 0.2, 0.0)
    assert rep["rungs"][0]["terminal_var"] < 1e-20
    assert rep["rungs"][0]["p_ks"] is None


def test_donsker_insufficient_sample():
    paths = synthetic_paths(0.5, 0.0, 1.0, 1e-2, 10, seed=0)
    with pytest.raises(InsufficientSample):
        donsker_check(paths, 0.0, 1.0)


def test_class_routes_structure(trace, chartset):
    routes = class_routes(trace, {"u": chartset, "d": chartset})
    assert set(routes) == {"uu", "dd", "ud", "du"}
    for cls, specs in routes.items():
        for spec in specs:
            assert spec.route[-1] == spec.k
            assert 23 not in spec.route and 27 not in spec.route
            assert spec.offset == trace.offsets[spec.k]


def test_fly_route_realises_energy_gain(trace, chartset):
    routes = class_routes(trace, {"u": chartset, "d": chartset})
    spec = [s for s in routes["uu"] if s.k == 50][0]
    eps = 2e-6
    out = fly_route(spec, 5e-7, math.pi / 2.0, eps)
    rate = out["delta_I"] / eps
    assert 5e-4 < rate < 3e-3
    # the return lands back inside the departure strip
    assert abs(out["theta_out"] - math.pi / 2.0) < 0.08
    assert out["flight_time"] > trace.times[50] - 1.0
