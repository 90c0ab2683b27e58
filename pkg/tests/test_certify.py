import math

import numpy as np
import pytest

from per3bp.certify import (
    BYPASS_SECTIONS,
    DEFAULT_CONE,
    ChainPolicy,
    ConnectingSequence,
    Strip,
    StepEnclosure,
    check_coverage,
    check_overlaps,
    default_strips,
    derive_constants,
    epsilon_schedule,
    representative_window,
    sequence_route,
    verify_C1,
    verify_C2,
    verify_C3,
    verify_sequence,
)
from per3bp.errors import (
    CoverageGap,
    ExpansionLost,
    MissingInput,
    NonPositiveDrift,
    OverlapTooThin,
    Undecided,
)
from per3bp.explore import GridWindow, build_grids
from per3bp.ival import IMat, Interval
from per3bp.windows import Window


# ---------------------------------------------------------------------
# synthetic linear hyperbolic steps
# ---------------------------------------------------------------------


class ToyStep:
    """Closed-form hyperbolic step: x expands, y contracts, the action
    picks up eps times a drive evaluated on the angle block."""

    def __init__(self, lam=4.0, sig=0.25, drive=lambda th: Interval(0.01)):
        self.lam = lam
        self.sig = sig
        self.drive = drive
        self.calls = 0

    def __call__(self, box, eps):
        eps = eps if isinstance(eps, Interval) else Interval(float(eps))
        self.calls += 1
        x, y, I, th = box
        d = self.drive(th)
        image = [x * self.lam, y * self.sig, I + eps * d, th]
        z = Interval(0.0)
        one = Interval(1.0)
        jac = IMat.from_intervals([
            [Interval(self.lam), z, z, z, z],
            [z, Interval(self.sig), z, z, z],
            [z, z, one, z, d],
            [z, z, z, one, z],
        ])
        mixed = IMat.from_intervals([[z] * 4 for _ in range(4)])
        return StepEnclosure(image, jac, mixed, d)


def toy_sequence(cell, eps, nsteps=2, drive=lambda th: Interval(0.01),
                 r=1e-6, name="uu", label="toy"):
    """A synthetic chain starting on a grid cell; window sizing mirrors
    the construction: exit radius half the certified throw, entries
    from the images with slack."""
    eps = eps if isinstance(eps, Interval) else Interval(float(eps))
    windows = [Window(None, r, r, tuple(cell.I_range),
                      tuple(cell.theta_range))]
    steps, throws, drifts = [], [], []
    for _ in range(nsteps):
        step = ToyStep(drive=drive)
        prev = windows[-1]
        enc = step(prev.domain(), eps)
        thr = step.lam * prev.x_radius
        throws.append(thr)
        drifts.append(enc.drift)
        iv, tv = enc.image[2], enc.image[3]
        windows.append(Window(
            None, min(r, 0.5 * thr),
            max(1.05 * enc.image[1].mag(), 0.25 * r),
            (iv.lo - 1e-12, iv.hi + 1e-12),
            (tv.lo - 1e-9, tv.hi + 1e-9),
        ))
        steps.append(step)
    return ConnectingSequence(
        label, name, cell.cls, cell.steps, eps, windows, steps, throws,
        drifts, list(range(nsteps + 1)), cell,
    )


@pytest.fixture
def toy_grid():
    return build_grids({"uu": (2, 2)})["uu"]


@pytest.fixture
def toy_strips():
    return default_strips()


def toy_cell(grid):
    # an interior action block: cells touching I = 0 cannot absorb the
    # outward padding of the chain windows
    w = representative_window(grid)
    theta = (w.theta_range[0] + 1e-3, w.theta_range[1] - 1e-3)
    return GridWindow(w.row, w.col, (2.5e-7, 5e-7), theta, w.cls, w.steps)


# ---------------------------------------------------------------------
# schedule
# ---------------------------------------------------------------------


def test_schedule_eight_parts_exact():
    sched = epsilon_schedule(1.6e-5, 8)
    assert len(sched) == 8
    assert sched[0][0] == 0.0
    assert sched[-1][1] == 1.6e-5
    for (a, b), (c, d) in zip(sched, sched[1:]):
        assert b == c
    widths = [b - a for a, b in sched]
    assert max(widths) - min(widths) < 1e-20


def test_schedule_single_part():
    assert epsilon_schedule(1.6e-5, 1) == [(0.0, 1.6e-5)]


def test_schedule_rejects_bad_input():
    with pytest.raises(ValueError):
        epsilon_schedule(1.6e-5, 0)
    with pytest.raises(ValueError):
        epsilon_schedule(-1.0, 4)


# ---------------------------------------------------------------------
# route
# ---------------------------------------------------------------------


def test_route_skips_collapsed_frames():
    route = sequence_route(50)
    assert route[0] == 0 and route[-1] == 0
    for i in BYPASS_SECTIONS:
        assert i not in route
    assert len(route) == 50 - len(BYPASS_SECTIONS) + 1


# ---------------------------------------------------------------------
# grid geometry clauses
# ---------------------------------------------------------------------


def test_coverage_and_overlap_pass(toy_grid, toy_strips):
    cov = check_coverage(toy_grid, toy_strips["u"])
    assert float(cov["I_overlap_min"]) > 0.0
    ov = check_overlaps(toy_grid, eps0=1.6e-5, a_I=1.0, a_theta=10.0,
                        r=1e-6)
    assert float(ov["margin_factor"]) >= 2.0


def test_coverage_gap_detected(toy_grid, toy_strips):
    shaved = [
        w if w.row != 0 else GridWindow(
            w.row, w.col, (w.I_range[0] + 4e-7, w.I_range[1]),
            w.theta_range, w.cls, w.steps,
        )
        for w in toy_grid.windows
    ]
    broken = type(toy_grid)(
        toy_grid.name, toy_grid.strip, toy_grid.target, toy_grid.rows,
        toy_grid.cols, toy_grid.center_theta, tuple(shaved),
        toy_grid.I_overlap, toy_grid.theta_overlap,
    )
    with pytest.raises(CoverageGap):
        check_coverage(broken, toy_strips["u"])


def test_overlap_shaved_below_minimum(toy_grid):
    eps0, a_th, r = 1.6e-5, 10.0, 1e-6
    shrunk = []
    for w in toy_grid.windows:
        if w.col == 0:
            hi = w.theta_range[1] - 0.999 * toy_grid.theta_overlap
            w = GridWindow(w.row, w.col, w.I_range,
                           (w.theta_range[0], hi), w.cls, w.steps)
        shrunk.append(w)
    broken = type(toy_grid)(
        toy_grid.name, toy_grid.strip, toy_grid.target, toy_grid.rows,
        toy_grid.cols, toy_grid.center_theta, tuple(shrunk),
        toy_grid.I_overlap, toy_grid.theta_overlap,
    )
    with pytest.raises(OverlapTooThin):
        check_overlaps(broken, eps0=eps0, a_I=1.0, a_theta=a_th, r=r)


# ---------------------------------------------------------------------
# sequence verification on the synthetic chain
# ---------------------------------------------------------------------


def test_toy_sequence_verifies(toy_grid):
    cell = toy_cell(toy_grid)
    seq = toy_sequence(cell, Interval(0.0, 2e-6))
    rec = verify_sequence(seq)
    assert float(rec["alignment_margin"]) > 0.0
    assert float(rec["drift"][0]) > 0.0
    final = [float(v) for v in rec["cone_final"]]
    assert final[0] <= DEFAULT_CONE.a_y
    assert final[1] <= DEFAULT_CONE.a_I
    assert final[2] <= DEFAULT_CONE.a_theta


def test_toy_sequence_drift_matches_drive(toy_grid):
    lo, hi = 0.0, math.pi / 6.0
    cell = GridWindow(0, 0, (0.0, 5e-7), (lo, hi), 1, 50)
    seq = toy_sequence(cell, Interval(0.0, 2e-6), nsteps=1,
                       drive=lambda th: th.sin())
    rec = verify_sequence(seq)
    c, C = float(rec["drift"][0]), float(rec["drift"][1])
    # the closed-form derivative range over the angle block is [0, 1/2]
    assert c <= 0.0 <= 0.5 <= C
    assert C < 0.5 + 1e-12


def test_verify_C1_passes(toy_grid, toy_strips):
    cell = toy_cell(toy_grid)
    seq = toy_sequence(cell, Interval(0.0, 2e-6))
    rec = verify_sequence(seq)
    frag = verify_C1([rec], toy_grid, toy_strips, Interval(0.0, 2e-6))
    assert float(frag["c"]) > 0.0
    assert float(frag["C"]) >= float(frag["c"])


def test_verify_C1_flags_negative_drift(toy_grid, toy_strips):
    cell = toy_cell(toy_grid)
    seq = toy_sequence(cell, Interval(0.0, 2e-6),
                       drive=lambda th: Interval(-0.01))
    rec = verify_sequence(seq)
    with pytest.raises(NonPositiveDrift):
        verify_C1([rec], toy_grid, toy_strips, Interval(0.0, 2e-6))


def test_verify_C1_flags_escaped_final_window(toy_grid, toy_strips):
    cell = toy_cell(toy_grid)
    # a drive of one pushes the action far outside the strip range
    seq = toy_sequence(cell, Interval(0.0, 2e-6),
                       drive=lambda th: Interval(1.0))
    rec = verify_sequence(seq)
    with pytest.raises(ExpansionLost):
        verify_C1([rec], toy_grid, toy_strips, Interval(0.0, 2e-6))


def test_verify_C2_four_classes():
    grids = build_grids({"uu": (2, 2), "dd": (2, 2),
                         "ud": (2, 2), "du": (2, 2)})
    strips = default_strips()
    eps = Interval(0.0, 2e-6)
    drives = {
        "uu": lambda th: Interval(0.01),
        "dd": lambda th: Interval(-0.01),
        "ud": lambda th: Interval(-0.005, 0.01),
        "du": lambda th: Interval(-0.01, 0.005),
    }
    frags = {}
    for name, drive in drives.items():
        cell = toy_cell(grids[name])
        seq = toy_sequence(cell, eps, drive=drive, name=name,
                           label=f"{name}-toy")
        rec = verify_sequence(seq)
        if name in ("uu", "dd"):
            frags[name] = verify_C1([rec], grids[name], strips, eps)
        else:
            frags[name] = {
                "condition": "C1", "class": name, "sequences": [rec],
            }
    out = verify_C2(frags)
    assert set(out["classes"]) == {"uu", "dd", "ud", "du"}
    assert float(out["c"]) > 0.0
    assert float(out["C"]) >= float(out["c"])


def test_verify_C2_flags_wrong_sign_dd():
    grids = build_grids({"dd": (2, 2)})
    eps = Interval(0.0, 2e-6)
    cell = toy_cell(grids["dd"])
    seq = toy_sequence(cell, eps, drive=lambda th: Interval(0.01),
                       name="dd", label="dd-up")
    rec = verify_sequence(seq)
    frags = {
        n: {"condition": "C1", "class": n, "sequences": [rec]}
        for n in ("uu", "dd", "ud", "du")
    }
    frags["dd"]["sequences"] = [dict(rec, **{"class": "dd"})]
    with pytest.raises(NonPositiveDrift) as err:
        verify_C2(frags)
    assert "dd" in str(err.value)


def test_verify_C2_requires_all_classes():
    with pytest.raises(MissingInput):
        verify_C2({"uu": {"sequences": []}})


# ---------------------------------------------------------------------
# C3
# ---------------------------------------------------------------------


def _c3_record(label, k, i_lo, i_hi):
    return {
        "label": label,
        "k": k,
        "start_cell": {"I": [repr(i_lo), repr(i_hi)]},
    }


def test_C3_separates_by_turn_count():
    out = verify_C3([
        _c3_record("a", 50, 0.0, 1.0), _c3_record("b", 58, 0.0, 1.0),
    ])
    assert out["pairs"][0]["separated_by"] == "turn-count"


def test_C3_separates_by_action_box():
    out = verify_C3([
        _c3_record("a", 50, 0.0, 1.0), _c3_record("b", 50, 2.0, 3.0),
    ])
    assert out["pairs"][0]["separated_by"] == "action-box"


def test_C3_undecided_on_overlap():
    with pytest.raises(Undecided):
        verify_C3([
            _c3_record("a", 50, 0.0, 1.0), _c3_record("b", 50, 0.5, 2.0),
        ])


# ---------------------------------------------------------------------
# derived constants
# ---------------------------------------------------------------------


def test_constants_reference_arithmetic():
    out = derive_constants(None, {
        "c": 0.00012,
        "C": 0.0076,
        "transition_time": (9.0 + 0.1) * math.pi,
        "c_h0": 1e-6,
        "r": 1e-6,
        "a_I": 1.0,
        "lam": 1165.0482837,
    })
    total = float(out["time"]["eps_scaled_total"])
    assert abs(total - 0.2382) < 5e-4
    assert out["time"]["ok"]
    eta = float(out["eta"]["required"])
    assert abs(eta - 0.0076020) < 1e-10
    assert out["eta"]["ok"]
    assert 0.0 < float(out["hausdorff_increment"]) < 0.2


def test_constants_measure_factor_closed_form():
    out = derive_constants(None, {
        "c": 0.01,
        "C": 0.02,
        "transition_time": 1.0,
        "eps": 1.0,
        "alpha": 2.0,
        "drift_target": 1.0 / 3.0,
    })
    assert out["m_max"] == math.ceil((1.0 / 3.0) / 0.01)
    factor = float(out["measure"]["factor"])
    assert factor == pytest.approx(2.0 ** (-2.0 / 0.03))


def test_constants_missing_input():
    with pytest.raises(MissingInput):
        derive_constants(None, {"C": 0.0076, "transition_time": 1.0})
    with pytest.raises(MissingInput):
        derive_constants(None, {"c": 1e-4, "C": 0.0076})


# ---------------------------------------------------------------------
# strips
# ---------------------------------------------------------------------


def test_default_strips_geometry():
    strips = default_strips()
    assert strips["u"].center_theta == pytest.approx(math.pi / 2.0)
    assert strips["d"].center_theta == pytest.approx(3.0 * math.pi / 2.0)
    for s in strips.values():
        assert s.I_range == (0.0, 1e-6)
        assert s.theta_range[1] - s.theta_range[0] == pytest.approx(0.16)


def test_strip_rejects_bad_kind():
    with pytest.raises(ValueError):
        Strip("sideways", 1e-6, (0.0, 1e-6), (0.0, 1.0))
