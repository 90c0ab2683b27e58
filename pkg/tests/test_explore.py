import hashlib
import json
import math

import numpy as np
import pytest

from per3bp.errors import OverlapInfeasible
from per3bp.explore import (
    DESK_DIMS,
    FULL_DIMS,
    anchor_chart,
    build_grids,
    mirror_state,
    write_artifacts,
)
from per3bp.charts import section_map, to_local
from per3bp.integrator import integrate_fast
from per3bp.model import hamiltonian, libration_point

H0 = -1.5050906397016
Q_STAR = (-0.9513385, 0.0, 0.0, -1.02124587611, 0.0)

#: unwrapped return phases of the four connecting-sequence lengths
OFFSETS = {
    50: -0.0750229,
    58: math.pi - 0.0249904,
    66: 0.0250421,
    74: math.pi + 0.0750746,
}


# ---------------------------------------------------------------------
# the periodic orbit
# ---------------------------------------------------------------------


def test_orbit_energy_and_seed(orbit):
    assert orbit.energy == pytest.approx(H0, abs=1e-12)
    assert np.allclose(orbit.seed, Q_STAR, atol=1e-6)
    assert orbit.seed[1] == 0.0 and orbit.seed[2] == 0.0


def test_orbit_period_matches_return_phase_gaps(orbit):
    # consecutive return phases differ by exactly one period (mod 2 pi)
    gap = (OFFSETS[58] - OFFSETS[50]) % (2.0 * math.pi)
    assert orbit.period == pytest.approx(gap, abs=1e-5)
    assert orbit.period > math.pi


def test_orbit_closes_and_is_hyperbolic(orbit):
    z, _ = integrate_fast(orbit.seed_array, 0.0, orbit.period, orbit.mu,
                          jac=True)
    assert np.allclose(z[:4], orbit.seed[:4], atol=1e-10)
    ev = np.linalg.eigvals(orbit.monodromy)
    ev = sorted(np.abs(ev))
    assert ev[0] * ev[3] == pytest.approx(1.0, rel=1e-6)
    assert orbit.lam == pytest.approx(ev[3], rel=1e-9)
    assert orbit.lam > 1000.0
    assert abs(np.linalg.det(orbit.monodromy) - 1.0) < 1e-6


def test_orbit_eigvectors_are_unit_and_invariant(orbit):
    M = orbit.monodromy
    for v, mult in ((np.array(orbit.unstable), orbit.lam),
                    (np.array(orbit.stable), 1.0 / orbit.lam)):
        assert np.linalg.norm(v) == pytest.approx(1.0, abs=1e-12)
        assert np.allclose(M @ v, mult * v, atol=1e-8 * mult + 1e-10)


# ---------------------------------------------------------------------
# the homoclinic skeleton
# ---------------------------------------------------------------------


def test_trace_shape_and_labels(trace):
    assert len(trace.times) == len(trace.states) == len(trace.labels) == 75
    assert trace.labels[0] == "entry"
    assert all(trace.labels[k] == "return" for k in (50, 58, 66, 74))
    assert trace.labels[20] == "excursion"
    assert all(a < b for a, b in zip(trace.times, trace.times[1:]))


def test_trace_miss_and_energy(trace):
    assert trace.miss < 1e-6
    assert trace.energy_drift < 1e-12
    h = [hamiltonian(*z, trace.orbit.mu, 0.0) for z in trace.states]
    assert max(abs(v - H0) for v in h) < 1e-12


def test_knots_sit_on_the_symmetry_plane(trace):
    for k in trace.knots:
        assert abs(trace.states[k][1]) <= 1e-10


def test_return_phases_match_known_values(trace):
    for k, target in OFFSETS.items():
        d = math.remainder(trace.offsets[k] - target, 2.0 * math.pi)
        assert abs(d) < 1e-4, (k, trace.offsets[k])
    # phases must agree with the recorded return times
    for k, (t_k, _) in trace.returns.items():
        assert trace.offsets[k] == pytest.approx(
            math.remainder(t_k, 2.0 * math.pi), abs=1e-12
        )


def test_total_transition_time_bound(trace):
    assert trace.times[74] < 9.1 * math.pi


def test_excursion_winds_once(trace):
    assert trace.winding == pytest.approx(1.0, abs=0.05)
    mu = trace.orbit.mu
    assert min(z[0] for z in trace.states) < mu - 1.0


def test_skeleton_is_mirror_symmetric(trace):
    t_sym = trace.t_sym
    for i in (1, 10, 20, 24):
        j = 50 - i
        assert trace.times[j] == pytest.approx(2.0 * t_sym - trace.times[i],
                                               abs=1e-12)
        zi, zj = np.array(trace.states[i]), np.array(trace.states[j])
        assert np.allclose(zj[:4], mirror_state(zi)[:4], atol=1e-12)


@pytest.mark.parametrize("i", [10, 30, 45, 60])
def test_anchors_lie_on_trajectories(trace, i):
    # flowing one anchor forward for one step lands on the next anchor,
    # on the outgoing half, the mirrored half, and the trailing turns
    mu = trace.orbit.mu
    dt = trace.times[i + 1] - trace.times[i]
    z = integrate_fast(np.array(trace.states[i]), 0.0, dt, mu)
    assert np.allclose(z[:4], trace.states[i + 1][:4], atol=1e-8)


def test_entry_anchor_is_on_the_unstable_fiber(trace):
    orbit = trace.orbit
    q0 = np.array(trace.states[0])
    d = q0[:4] - orbit.seed_array[:4]
    v = np.array(orbit.unstable)[:4]
    assert 0.0 < trace.s_root < 1e-6
    # the anchor is the nearby symmetry-plane crossing of the shot, so
    # it sits a short flight away from the fiber point itself
    assert np.linalg.norm(d) == pytest.approx(trace.s_root, rel=0.05)
    cos = abs(d @ v) / np.linalg.norm(d)
    assert cos > 0.98


def test_samples_cover_the_skeleton(trace):
    t = trace.samples[:, 0]
    assert t[0] == 0.0
    assert t[-1] >= trace.times[74] - 0.25
    assert np.all(np.diff(t) > 0.0)
    assert np.allclose(trace.samples[:, 5], t)


# ---------------------------------------------------------------------
# fitted frames
# ---------------------------------------------------------------------


def test_anchor_chart_matches_known_frame(orbit):
    chart = anchor_chart(orbit)
    A = chart.A
    assert np.allclose(
        A[:2, :3],
        [[0.377372287914, 0.377372287914, 1.53559852923],
         [0.926061637427, -0.926061637427, 0.0]],
        atol=1e-5,
    )
    assert A[2, 2] == 1.0 and A[3, 3] == 1.0
    assert chart.h_ref == pytest.approx(H0, abs=1e-12)


def test_chartset_structure(chartset, trace):
    assert len(chartset.sections) == 74
    assert chartset.lam == trace.orbit.lam
    for k in (50, 58, 66, 74):
        seq = chartset.sequences[k]
        assert seq[0] == "A" and seq[-1] == "A"
        assert len(seq) == k + 1


def test_chart_growth_products_recover_the_multiplier(chartset):
    # eight consecutive steps along the trailing revolutions compose to
    # one full return, so their growth factors multiply to the orbit's
    # unstable multiplier, up to the floor applied to near-neutral steps
    lams = [s["lam"] for s in chartset.sections]
    prod = float(np.prod(lams[58 - 8:58]))
    assert prod == pytest.approx(chartset.lam, rel=0.15)


def test_chart_directions_stay_transverse(chartset):
    for s in chartset.sections:
        A = s["chart"].A
        cu = A[:2, 0] / np.hypot(*A[:2, 0])
        cs = A[:2, 1] / np.hypot(*A[:2, 1])
        assert abs(cu[0] * cs[1] - cu[1] * cs[0]) > 0.02


@pytest.mark.parametrize("i", [1, 2, 40])
def test_step_derivative_attains_normal_form(chartset, trace, i):
    # in the fitted frames the step derivative expands x by lam_i with
    # no leakage into y, and contracts y
    charts = {s["index"]: s["chart"] for s in chartset.sections}
    src = chartset.anchor if i == 1 else charts[i - 1]
    v = [float(c) for c in to_local(src, trace.states[i - 1], 0.0)]
    dt = trace.times[i] - trace.times[i - 1]
    res = section_map(src, charts[i], v, 0.0, rigor="fast", mixed=False,
                      t_min=0.5 * dt, t_max=1.6 * dt + 0.2)
    lam_i = chartset.sections[i - 1]["lam"]
    m = res.jac[:, :4]
    assert m[0, 0] == pytest.approx(lam_i, rel=1e-4)
    assert abs(m[1, 0]) < 1e-4 * lam_i
    assert abs(m[0, 1]) < 1e-4
    # individual steps need not contract y (only full revolutions must),
    # but the stable factor stays of order one
    assert abs(m[1, 1]) < 2.0


# ---------------------------------------------------------------------
# window grids
# ---------------------------------------------------------------------


def test_desk_grids_cover_the_strips_exactly():
    grids = build_grids(DESK_DIMS)
    assert set(grids) == {"uu", "dd", "ud", "du"}
    uu = grids["uu"]
    assert len(uu.windows) == 24 and uu.rows == 4 and uu.cols == 6
    rows = sorted({w.I_range for w in uu.windows})
    assert rows[0][0] == 0.0 and rows[-1][1] == 1e-6
    cols = sorted({w.theta_range for w in uu.windows})
    assert cols[0][0] == pytest.approx(math.pi / 2 - 0.08)
    assert cols[-1][1] == pytest.approx(math.pi / 2 + 0.08)
    for (a, b), (c, d) in zip(rows, rows[1:]):
        assert c < b and b - c == pytest.approx(uu.I_overlap, rel=1e-9)
    for (a, b), (c, d) in zip(cols, cols[1:]):
        assert c < b and b - c == pytest.approx(uu.theta_overlap, rel=1e-9)


def test_grid_overlaps_are_twice_the_minimum():
    g = build_grids(DESK_DIMS)["dd"]
    assert g.I_overlap == pytest.approx(2.0 * 1.6e-5 * 1.0 * 1e-6)
    assert g.theta_overlap == pytest.approx(2.0 * 10.0 * 1e-6)


def test_grid_classes_and_sequence_lengths():
    grids = build_grids(DESK_DIMS)
    for name, (k1, k2) in (("uu", (50, 66)), ("ud", (58, 74))):
        g = grids[name]
        for w in g.windows:
            mid = 0.5 * (w.theta_range[0] + w.theta_range[1])
            assert w.cls == (1 if mid >= g.center_theta else 2)
            assert w.steps == (k1 if w.cls == 1 else k2)
    cls = [w.cls for w in grids["uu"].windows]
    assert cls.count(1) == cls.count(2) == 12
    assert grids["du"].center_theta == pytest.approx(3 * math.pi / 2)


def test_full_scale_grid_dimensions():
    grids = build_grids(FULL_DIMS)
    assert len(grids["uu"].windows) == 16 * 30
    assert len(grids["ud"].windows) == 16 * 4


def test_single_window_grid_is_the_whole_strip():
    g = build_grids({"uu": (1, 1)})["uu"]
    (w,) = g.windows
    assert w.I_range == (0.0, 1e-6)
    assert w.theta_range[0] == pytest.approx(math.pi / 2 - 0.08)


def test_infeasible_overlap_raises():
    with pytest.raises(OverlapInfeasible):
        build_grids({"uu": (4, 6)}, overlap_factor=1e9)


# ---------------------------------------------------------------------
# artifacts
# ---------------------------------------------------------------------


def test_artifacts_are_deterministic(tmp_path, trace, chartset):
    grids = build_grids(DESK_DIMS)
    p1 = write_artifacts(tmp_path / "a", trace, chartset, grids)
    p2 = write_artifacts(tmp_path / "b", trace, chartset, grids)
    for key in p1:
        h1 = hashlib.sha256(open(p1[key], "rb").read()).hexdigest()
        h2 = hashlib.sha256(open(p2[key], "rb").read()).hexdigest()
        assert h1 == h2, key


def test_artifact_contents_round_trip(tmp_path, trace, chartset):
    grids = build_grids(DESK_DIMS)
    paths = write_artifacts(tmp_path / "out", trace, chartset, grids,
                            meta={"run": "test"})
    charts = json.load(open(paths["charts"]))
    assert charts["version"] == 1
    assert float(charts["h0"]) == H0
    assert float(charts["lambda"]) == trace.orbit.lam
    assert len(charts["sections"]) == 74
    assert charts["meta"] == {"run": "test"}
    gdoc = json.load(open(paths["grids"]))
    assert set(gdoc["grids"]) == {"dd", "du", "ud", "uu"}
    assert len(gdoc["grids"]["uu"]["windows"]) == 24
    with open(paths["homoclinic"]) as f:
        header = f.readline().strip().split(",")
    assert header == ["t", "X", "Y", "P_X", "P_Y", "theta_unwrapped"]
    rows = np.loadtxt(paths["homoclinic"], delimiter=",", skiprows=1)
    assert rows.shape == trace.samples.shape
    assert np.array_equal(rows, trace.samples)


def test_first_sample_is_inside_the_entry_strip(trace):
    # the skeleton starts on the symmetry plane within the shooting
    # radius of the orbit seed, on the orbit's side of the equilibrium
    q0 = trace.samples[0]
    assert q0[2] == 0.0
    assert abs(q0[1] - trace.orbit.seed[0]) < 1e-6
    assert q0[1] > libration_point(trace.orbit.mu)
