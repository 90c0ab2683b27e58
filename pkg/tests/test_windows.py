import numpy as np
import pytest

from per3bp.errors import EnclosureTooWide, ExpansionLost
from per3bp.ival import Interval
from per3bp.windows import (
    AlignmentResult,
    ConeParams,
    Window,
    check_alignment,
    cone_sampling_oracle,
    cone_value,
    propagate_cone,
)


class _Enclosed:
    """Interval-exact enclosure of an affine map, for synthetic tests."""

    def __init__(self, L, shift=None):
        self.L = np.asarray(L, dtype=float)
        self.shift = np.zeros(4) if shift is None else np.asarray(shift)

    def __call__(self, box, eps):
        image = []
        for i in range(4):
            acc = Interval(self.shift[i])
            for j in range(4):
                acc = acc + box[j] * self.L[i, j]
            image.append(acc)
        return type("R", (), {"image": image})()

    def point(self, z, eps):
        return self.L @ np.asarray(z) + self.shift


def _unit_window(i_range=(-1.0, 1.0), th_range=(-1.0, 1.0)):
    return Window(None, 1.0, 1.0, i_range, th_range)


HYPERBOLIC = np.diag([2.0, 0.5, 1.0, 1.0])


def test_model_hyperbolic_map_aligns():
    N = _unit_window(i_range=(-0.5, 0.5), th_range=(-0.5, 0.5))
    M = _unit_window()
    res = check_alignment(N, M, _Enclosed(HYPERBOLIC), 0.0)
    assert res.aligned
    assert res.orientation == 1
    assert res.x_margin == pytest.approx(1.0)
    assert res.y_margin == pytest.approx(0.5)
    assert res.stable_margin == pytest.approx(0.5)


def test_identity_map_does_not_align():
    N = _unit_window()
    res = check_alignment(N, N, _Enclosed(np.eye(4)), 0.0)
    assert not res.aligned
    assert res.clause == "exit faces"


def test_orientation_reversing_alignment():
    L = HYPERBOLIC.copy()
    L[0, 0] = -2.0
    N = _unit_window(i_range=(-0.5, 0.5), th_range=(-0.5, 0.5))
    res = check_alignment(N, _unit_window(), _Enclosed(L), 0.0)
    assert res.aligned
    assert res.orientation == -1
    assert res.x_margin == pytest.approx(1.0)


def test_stable_escape_fails_with_named_clause():
    L = HYPERBOLIC.copy()
    L[1, 1] = 3.0  # the stable block leaks out
    res = check_alignment(_unit_window(), _unit_window(), _Enclosed(L), 0.0)
    assert not res.aligned
    assert res.clause == "stable y"
    assert res.y_margin < 0.0


def test_undecidable_face_raises():
    class Fuzzy:
        def __call__(self, box, eps):
            # a face image straddling the target exit ball boundary can
            # never certify either side
            img = [
                Interval(-1.5, 0.0),
                Interval(-0.1, 0.1),
                Interval(-0.1, 0.1),
                Interval(-0.1, 0.1),
            ]
            return type("R", (), {"image": img})()

    with pytest.raises(EnclosureTooWide):
        check_alignment(_unit_window(), _unit_window(), Fuzzy(), 0.0, depth=2, face_depth=0)


def test_alignment_matches_boundary_sampling_on_random_maps():
    rng = np.random.default_rng(41)
    agree = 0
    for trial in range(12):
        lam = rng.uniform(1.5, 4.0) * rng.choice((-1.0, 1.0))
        L = np.diag([lam, rng.uniform(0.1, 0.6), 1.0, 1.0])
        L += rng.normal(scale=0.05, size=(4, 4)) * (1 - np.eye(4))
        shift = rng.normal(scale=0.05, size=4)
        N = _unit_window(i_range=(-0.6, 0.6), th_range=(-0.6, 0.6))
        M = _unit_window()
        enc = _Enclosed(L, shift)
        try:
            verdict = check_alignment(N, M, enc, 0.0).aligned
        except EnclosureTooWide:
            continue
        # brute force: corners are extremal for affine maps
        corners = []
        from itertools import product

        for c in product(*[(d.lo, d.hi) for d in N.domain()]):
            corners.append(enc.point(c, 0.0))
        corners = np.array(corners)
        minus = corners[: len(corners) // 2]
        plus = corners[len(corners) // 2 :]
        inside = (
            np.all(np.abs(corners[:, 1]) < 1.0)
            and np.all(np.abs(corners[:, 2]) < 1.0)
            and np.all(np.abs(corners[:, 3]) < 1.0)
        )
        thrown = (
            np.all(minus[:, 0] < -1.0) and np.all(plus[:, 0] > 1.0)
        ) or (np.all(minus[:, 0] > 1.0) and np.all(plus[:, 0] < -1.0))
        assert verdict == (inside and thrown), (trial, L)
        agree += 1
    assert agree >= 8


def _as_intervals(D):
    return [[Interval(float(v)) for v in row] for row in D]


ZERO4 = _as_intervals(np.zeros((4, 4)))


def test_cone_propagation_toy_minimal_slopes():
    a = ConeParams(1.0, 1.0, 1.0)
    b = propagate_cone(a, _as_intervals(HYPERBOLIC), ZERO4, eps0=0.3, safety=1.0)
    assert b.a_y == pytest.approx(0.25)
    assert b.a_I == pytest.approx(0.5)
    assert b.a_theta == pytest.approx(0.5)


def test_cone_propagation_loses_expansion_without_dominance():
    # unit expansion with unit couplings: denominator 1 - 1 - ... <= 0
    with pytest.raises(ExpansionLost):
        propagate_cone(
            ConeParams(1.0, 1.0, 1.0), _as_intervals(np.ones((4, 4))), ZERO4, eps0=0.1
        )


def test_cone_propagation_identity_returns_the_same_cone():
    # the identity propagates every cone into itself, with no slack
    a = ConeParams(1.0, 1.0, 1.0)
    b = propagate_cone(a, _as_intervals(np.eye(4)), ZERO4, eps0=0.1, safety=1.0)
    assert (b.a_y, b.a_I, b.a_theta) == (1.0, 1.0, 1.0)


def test_cone_propagation_monotone_under_widening():
    a = ConeParams(1.0, 1.0, 1.0)
    D = _as_intervals(HYPERBOLIC)
    b0 = propagate_cone(a, D, ZERO4, eps0=0.3)
    D[1][0] = Interval(-0.2, 0.2)
    D[0][3] = Interval(-0.05, 0.05)
    b1 = propagate_cone(a, D, ZERO4, eps0=0.3)
    assert b1.a_y >= b0.a_y
    assert b1.a_I >= b0.a_I
    assert b1.a_theta >= b0.a_theta
    M = _as_intervals(np.zeros((4, 4)))
    M[2][2] = Interval(-0.4, 0.4)
    b2 = propagate_cone(a, D, M, eps0=0.3)
    assert b2.a_I >= b1.a_I


def test_cone_chain_closure_on_contracting_toy():
    # iterating the propagation on a dominated map returns into the cone
    a = ConeParams(1.0, 1.0, 1.0)
    D = _as_intervals(HYPERBOLIC)
    b = a
    for _ in range(3):
        b = propagate_cone(a if b is a else b, D, ZERO4, eps0=0.3)
    assert a.dominates(b)


def test_cone_sampling_oracle_linear_diagonal():
    f = lambda z, e: HYPERBOLIC @ np.asarray(z)
    a = ConeParams(1.0, 1.0, 1.0)
    b = ConeParams(0.25, 0.5, 0.5)
    frac = cone_sampling_oracle(f, a, b, eps=0.3, trials=10_000, seed=7)
    assert frac == 1.0


def test_cone_sampling_oracle_negative_control():
    f = lambda z, e: HYPERBOLIC @ np.asarray(z)
    a = ConeParams(1.0, 1.0, 1.0)
    half = ConeParams(0.125, 0.25, 0.25)
    frac = cone_sampling_oracle(f, a, half, eps=0.3, trials=4_000, seed=7)
    assert frac < 1.0


def test_cone_value_sign():
    a = ConeParams(1.0, 1.0, 1.0)
    assert cone_value(a, (1.0, 0.5, 0.0, 0.3), 0.5) > 0.0
    assert cone_value(a, (0.1, 0.5, 0.0, 0.0), 0.5) < 0.0
    # the action leg tightens as eps shrinks
    assert cone_value(a, (1.0, 0.0, 0.4, 0.0), 0.5) > 0.0
    assert cone_value(a, (1.0, 0.0, 0.4, 0.0), 0.1) < 0.0


def test_window_validation():
    with pytest.raises(ValueError):
        Window(None, 0.0, 1.0, (0.0, 1.0), (0.0, 1.0))
    with pytest.raises(ValueError):
        Window(None, 1.0, 1.0, (1.0, 0.0), (0.0, 1.0))
    w = Window(None, 2.0, 0.5, (0.0, 1e-6), (0.2, 0.3))
    dom = w.domain()
    assert dom[0] == Interval(-2.0, 2.0)
    assert dom[2] == Interval(0.0, 1e-6)


def test_cone_params_validation_and_domination():
    with pytest.raises(ValueError):
        ConeParams(0.0, 1.0, 1.0)
    a = ConeParams(1e-3, 1.0, 10.0)
    assert a.dominates(ConeParams(1e-3, 0.5, 10.0))
    assert not a.dominates(ConeParams(2e-3, 0.5, 10.0))
