"""Transverse sections and local coordinates along an orbit.

A section through an anchor point is the affine hyperplane in the
(X, Y)-plane orthogonal to the planar flow direction there, extended by
the remaining coordinates.  On each section a chart turns the ambient
coordinates into local ones v = (x, y, I, theta): x and y follow the
hyperbolic splitting, I is the autonomous energy offset from the anchor
level, and theta is the angle.  The chart is an affine map followed by a
square-root solve for the momentum that was traded for the energy, so
the identity H0(chart(v)) = H0(anchor) + I holds by construction.

Section-to-section maps are computed by flowing jets seeded in the
source chart until the first transversal crossing of the destination
section, locating the crossing rigorously, and reading the image off in
the destination chart.  The same code path runs in point mode for fast
(non-validated) evaluation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateSplitting,
    NoCrossing,
    OffSection,
    RadicandNegative,
    TangentialCrossing,
)
from .integrator import IntegratorConfig, StepResult, taylor_step
from .ival import IMat, Interval
from .jets import Jet, JetSpec, jet_mul
from .model import hamiltonian, omega, omega_gradient, vector_field
from .taylor import field_jets

_LOCAL_DIM = 4


# ---------------------------------------------------------------------
# sections
# ---------------------------------------------------------------------


@dataclass(frozen=True)
class Section:
    """Affine section through an anchor, transverse to the planar flow.

    case "Y": |F_X| > |F_Y| at the anchor, the section fixes
    X = slope*(Y - Y*) + X* and is parameterized by (Y, P_Y, h, theta).
    case "X": the mirror situation, fixing Y and parameterized by
    (X, P_X, h, theta).
    """

    anchor: tuple
    case: str
    slope: float

    def __post_init__(self):
        if self.case not in ("Y", "X"):
            raise ValueError("section case must be 'Y' or 'X'")

    @property
    def f_x(self) -> float:
        return self.anchor[2] + self.anchor[1]  # P_X + Y

    @property
    def f_y(self) -> float:
        return self.anchor[3] - self.anchor[0]  # P_Y - X

    def offset_coefficients(self):
        """(cx, cy, c0) with the section given by cx*X + cy*Y + c0 = 0."""
        Xs, Ys = self.anchor[0], self.anchor[1]
        if self.case == "Y":
            return 1.0, -self.slope, self.slope * Ys - Xs
        return -self.slope, 1.0, self.slope * Xs - Ys

    def offset(self, X, Y):
        cx, cy, c0 = self.offset_coefficients()
        return X * cx + Y * cy + c0


def section_at(anchor) -> Section:
    """Section through the anchor point, case chosen by transversality."""
    anchor = tuple(float(c) for c in anchor)
    f_x = anchor[2] + anchor[1]
    f_y = anchor[3] - anchor[0]
    if abs(f_x) > abs(f_y):
        return Section(anchor, "Y", -f_y / f_x)
    if f_y == 0.0:
        raise DegenerateSplitting("flow vanishes at the requested anchor")
    return Section(anchor, "X", -f_x / f_y)


# ---------------------------------------------------------------------
# charts
# ---------------------------------------------------------------------


@dataclass(frozen=True)
class LocalPoint:
    x: float
    y: float
    I: float
    theta: float

    def as_tuple(self):
        return (self.x, self.y, self.I, self.theta)


@dataclass(frozen=True)
class Chart:
    """Local coordinates v = (x, y, I, theta) on a section.

    The ambient point is recovered as R(p + eps*w + A v) where R solves
    for the momentum conjugate to the section parameter from the energy
    component, with the branch fixing the square-root sign.
    """

    section: Section
    p: tuple
    w: tuple
    A: np.ndarray
    branch: int
    mu: float

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "p", tuple(float(c) for c in self.p))
        object.__setattr__(self, "w", tuple(float(c) for c in self.w))
        if A.shape != (4, 4):
            raise ValueError("chart matrix must be 4x4")
        if not (
            np.all(A[2] == (0.0, 0.0, 1.0, 0.0))
            and np.all(A[3] == (0.0, 0.0, 0.0, 1.0))
            and A[0, 3] == 0.0
            and A[1, 3] == 0.0
        ):
            raise ValueError("chart matrix violates the required block pattern")
        if self.w[2] != 0.0 or self.w[3] != 0.0:
            raise ValueError("eccentricity shift may only act on (x, y)")
        if self.branch not in (1, -1):
            raise ValueError("branch must be +1 or -1")
        a = self.section.anchor
        expect = (a[1], a[3]) if self.section.case == "Y" else (a[0], a[2])
        if (self.p[0], self.p[1]) != expect or self.p[3] != a[4]:
            raise ValueError("chart base point must sit at the section anchor")

    @property
    def h_ref(self) -> float:
        """Reference energy; I = 0 corresponds to this level."""
        return self.p[2]

    def det_block(self) -> float:
        A = self.A
        return A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0]


def default_branch(section: Section) -> int:
    f = section.f_x if section.case == "Y" else section.f_y
    return 1 if f > 0 else -1


def make_chart(section: Section, A, w=(0.0, 0.0, 0.0, 0.0), branch=None, mu=None):
    from .model import ModelParams

    mu = ModelParams().mu if mu is None else mu
    a = section.anchor
    h0 = hamiltonian(a[0], a[1], a[2], a[3], a[4], mu, 0.0)
    if section.case == "Y":
        p = (a[1], a[3], h0, a[4])
    else:
        p = (a[0], a[2], h0, a[4])
    return Chart(
        section,
        p,
        tuple(w),
        np.asarray(A, dtype=float),
        default_branch(section) if branch is None else branch,
        mu,
    )


def _sqrt_checked(rad):
    if isinstance(rad, float):
        if rad < 0.0:
            raise RadicandNegative(f"momentum radicand {rad:.3e} is negative")
        return math.sqrt(rad)
    low = rad.lo if isinstance(rad, Interval) else float(np.min(rad.lo[..., 0]))
    if low < 0.0:
        raise RadicandNegative(f"momentum radicand lower bound {low:.3e} is negative")
    return rad.sqrt()


def from_local(chart: Chart, v, eps):
    """Ambient state (X, Y, P_X, P_Y, theta) of a local point.

    v is a sequence (x, y, I, theta); all entries may be floats,
    Intervals, or Jets, mixed with the float chart constants.
    """
    A, p, w = chart.A, chart.p, chart.w
    u = []
    for i in range(4):
        acc = A[i, 0] * v[0] + A[i, 1] * v[1] + A[i, 2] * v[2] + A[i, 3] * v[3]
        if w[i] != 0.0:
            acc = acc + eps * w[i]
        u.append(acc + p[i])
    sec = chart.section
    Xs, Ys = sec.anchor[0], sec.anchor[1]
    if sec.case == "Y":
        Y, P_Y, h, theta = u
        X = (Y - Ys) * sec.slope + Xs
        vy = P_Y - X
        rad = (h + omega(X, Y, chart.mu)) * 2.0 - vy * vy
        P_X = _sqrt_checked(rad) * float(chart.branch) - Y
    else:
        X, P_X, h, theta = u
        Y = (X - Xs) * sec.slope + Ys
        vx = P_X + Y
        rad = (h + omega(X, Y, chart.mu)) * 2.0 - vx * vx
        P_Y = _sqrt_checked(rad) * float(chart.branch) + X
    return [X, Y, P_X, P_Y, theta]


def _scalar_bounds(x):
    if isinstance(x, float):
        return x, x
    if isinstance(x, Interval):
        return x.lo, x.hi
    v = x.val()
    return v.lo, v.hi


def to_local(chart: Chart, s, eps, tol: float = 1e-7, check: bool = True):
    """Local coordinates (x, y, I, theta) of an ambient point on the
    chart's section; inverse of from_local."""
    X, Y, P_X, P_Y, theta = s
    sec = chart.section
    if check:
        glo, ghi = _scalar_bounds(sec.offset(X, Y))
        if glo > tol or ghi < -tol:
            raise OffSection(f"point misses the section by [{glo:.3e}, {ghi:.3e}]")
        sheet = (P_X + Y) if sec.case == "Y" else (P_Y - X)
        slo, shi = _scalar_bounds(sheet * float(chart.branch))
        if shi < -tol:
            raise OffSection("point lies on the opposite momentum sheet")
    h = hamiltonian(X, Y, P_X, P_Y, theta, chart.mu, 0.0)
    if sec.case == "Y":
        u = (Y, P_Y, h, theta)
    else:
        u = (X, P_X, h, theta)
    p, w, A = chart.p, chart.w, chart.A
    I = u[2] - p[2]
    th = u[3] - p[3]
    r1 = u[0] - p[0] - A[0, 2] * I
    r2 = u[1] - p[1] - A[1, 2] * I
    if w[0] != 0.0:
        r1 = r1 - eps * w[0]
    if w[1] != 0.0:
        r2 = r2 - eps * w[1]
    det = chart.det_block()
    x = (r1 * A[1, 1] - r2 * A[0, 1]) * (1.0 / det)
    y = (r2 * A[0, 0] - r1 * A[1, 0]) * (1.0 / det)
    return [x, y, I, th]


# ---------------------------------------------------------------------
# chart fitting (non-rigorous; outputs frozen as plain floats)
# ---------------------------------------------------------------------


def fit_chart(
    section: Section,
    m: np.ndarray,
    lam: float = None,
    eps_shift=None,
    branch=None,
    mu=None,
) -> Chart:
    """Chart whose local map derivative attains the normal form.

    m is the (non-rigorous) 4x4 Jacobian, in section-parameter
    coordinates (c, p_c, h, theta), of the incoming section map composed
    with the previous chart; its first two columns are the transported
    unstable/stable directions, the third the transported energy
    direction.  With lam given, the new chart absorbs the columns so the
    local derivative becomes diag(lam, 1/lam, 1) plus a theta row; with
    lam omitted, it is recovered as the expanding eigenvalue of the
    (x, y) block (the return-map case).

    eps_shift, when given, is d/deps of the incoming map image at the
    anchor (4-vector, same coordinates); w is chosen to cancel its
    (x, y) component exactly.
    """
    m = np.asarray(m, dtype=float)
    if lam is None:
        evals = np.linalg.eigvals(m[:2, :2])
        lam = float(np.max(np.abs(evals)))
    if not lam > 1.0 + 1e-6:
        raise DegenerateSplitting(f"expansion estimate {lam} is not hyperbolic")
    col_u = m[0:2, 0] / lam
    col_s = m[0:2, 1] * lam
    det = col_u[0] * col_s[1] - col_u[1] * col_s[0]
    if abs(det) < 1e-12:
        raise DegenerateSplitting("transported directions are nearly collinear")
    a13, a23 = m[0, 2], m[1, 2]
    A = np.array(
        [
            [col_u[0], col_s[0], a13, 0.0],
            [col_u[1], col_s[1], a23, 0.0],
            [0.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
        ]
    )
    if eps_shift is None:
        w = (0.0, 0.0, 0.0, 0.0)
    else:
        e = np.asarray(eps_shift, dtype=float)
        w = (e[0] - a13 * e[2], e[1] - a23 * e[2], 0.0, 0.0)
    return make_chart(section, A, w=w, branch=branch, mu=mu)


# ---------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------


def chart_to_dict(chart: Chart) -> dict:
    return {
        "anchor": [repr(float(c)) for c in chart.section.anchor],
        "case": chart.section.case,
        "slope": repr(float(chart.section.slope)),
        "branch": chart.branch,
        "mu": repr(float(chart.mu)),
        "p": [repr(float(c)) for c in chart.p],
        "w": [repr(float(c)) for c in chart.w],
        "A": [[repr(float(c)) for c in row] for row in chart.A],
    }


def chart_from_dict(d: dict) -> Chart:
    section = Section(
        tuple(float(c) for c in d["anchor"]), d["case"], float(d["slope"])
    )
    return Chart(
        section,
        tuple(float(c) for c in d["p"]),
        tuple(float(c) for c in d["w"]),
        np.array([[float(c) for c in row] for row in d["A"]]),
        int(d["branch"]),
        float(d["mu"]),
    )


# ---------------------------------------------------------------------
# section-to-section maps
# ---------------------------------------------------------------------


@dataclass
class SectionMapResult:
    """Local image of a section map with its first-order data.

    image: 4 Intervals (or floats in fast mode), destination coordinates
    jac: 4x5 interval (or float) matrix, d(image)/d(x, y, I, theta, eps)
    mixed: 4x4 matrix of d^2(image)/(d eps d(x, y, I, theta)), or None
    time: flow time to the crossing
    drift: enclosure of (I_out - I_in)/eps over the whole domain, valid
        for every eps in the input range including 0 (None in fast mode)
    """

    image: list
    jac: object
    mixed: object
    time: object
    drift: object = None


def _g_jet(jets, coef):
    return jets[0] * coef[0] + jets[1] * coef[1] + coef[2]


def _certify_sign(res: StepResult, coef, t1: float, t2: float, sign: int, depth=16):
    """True when the section offset holds the strict sign over [t1, t2]."""
    if t2 <= t1:
        return True
    stack = [(t1, t2, 0)]
    while stack:
        a, b, d = stack.pop()
        tau = Interval(a, b)
        g = (
            res.eval_var(tau, 0) * coef[0]
            + res.eval_var(tau, 1) * coef[1]
            + coef[2]
        ).val()
        if (sign > 0 and g.lo > 0.0) or (sign < 0 and g.hi < 0.0):
            continue
        if d >= depth:
            return False
        m = 0.5 * (a + b)
        stack.append((a, m, d + 1))
        stack.append((m, b, d + 1))
    return True


def _strict_sign_at(res: StepResult, coef, tau: float):
    g = (
        res.eval_var(tau, 0) * coef[0] + res.eval_var(tau, 1) * coef[1] + coef[2]
    ).val()
    if g.lo > 0.0:
        return 1
    if g.hi < 0.0:
        return -1
    return 0


def _bracket_crossing(res: StepResult, coef, sign0: int, iters: int = 60):
    """[lo, hi] in local step time with the offset strictly sign0 at lo
    and strictly -sign0 at hi."""
    lo, hi = 0.0, res.h
    for _ in range(iters):
        m = 0.5 * (lo + hi)
        s = _strict_sign_at(res, coef, m)
        if s == sign0:
            lo = m
        elif s == -sign0:
            hi = m
        else:
            # inside the spread of crossing times over the seed box; try
            # to sharpen both ends once, then stop
            m1 = 0.5 * (lo + m)
            if _strict_sign_at(res, coef, m1) == sign0:
                lo = m1
            m2 = 0.5 * (m + hi)
            if _strict_sign_at(res, coef, m2) == -sign0:
                hi = m2
            if not (lo < m1 or hi > m2):
                break
        if hi - lo < 1e-12 * res.h:
            break
    return lo, hi


def _interval_mid(x: Interval) -> Interval:
    return Interval(x.mid())


def _crossing_state(res: StepResult, coef, window: Interval, mu: float):
    """Jets of the crossing point for every seed, from the step that
    brackets the crossing inside the local time window.

    The crossing time tau(s) depends on the seeds; its first derivatives
    (and the mixed second derivative with the designated direction) are
    obtained by implicit differentiation of g(flow(tau(s), s)) = 0 and
    packed into a jet, so the crossing state S(tau_ref) + delta * f
    carries correct derivative slots.
    """
    spec = res.spec
    if isinstance(window, Interval):
        tau_ref = window.mid()
        dval = window - tau_ref
    else:
        # point mode: the crossing time itself, no spread
        tau_ref = float(window)
        dval = Interval(0.0)
    E = res.eval(window)  # enclosure over the window, with seed slots
    FJ = field_jets(E, mu)
    gdot = FJ[0] * coef[0] + FJ[1] * coef[1]
    gv = gdot.val()
    if gv.contains(0.0):
        raise TangentialCrossing(
            f"flow-section angle interval {gv} contains zero at the crossing"
        )
    gE = _g_jet(E, coef)
    ngrad = spec.ngrad
    # state-Jacobian-times-field over the window box, for the curvature
    # of the crossing time
    box = [e.val() for e in E]
    sspec = JetSpec(6, interval=True)
    sj = [Jet.seed(sspec, b, i) for i, b in enumerate(box)]
    fj = field_jets(sj, mu)
    dff = []
    for i in range(6):
        acc = Interval(0.0)
        for j in range(6):
            acc = acc + fj[i].grad(j) * fj[j].val()
        dff.append(acc)
    g_tt = dff[0] * coef[0] + dff[1] * coef[1]

    S = res.eval(tau_ref)
    inv_gt = Interval(1.0) / gv
    tp = [-(gE.grad(j)) * inv_gt for j in range(ngrad)]
    dlo = np.zeros(spec.width)
    dhi = np.zeros(spec.width)
    dlo[0], dhi[0] = dval.lo, dval.hi
    for j in range(ngrad):
        dlo[1 + j], dhi[1 + j] = tp[j].lo, tp[j].hi
    if spec.mix:
        tpe = tp[spec.eidx]
        g_te = gdot.grad(spec.eidx)
        for j in range(ngrad):
            num = (gE.mix(j) + gdot.grad(j) * tpe) * gv - gE.grad(j) * (
                g_te + g_tt * tpe
            )
            tpp = -num * inv_gt * inv_gt
            dlo[1 + ngrad + j], dhi[1 + ngrad + j] = tpp.lo, tpp.hi
    delta = Jet(spec, dlo, dhi if spec.interval else None)
    out = []
    for i in range(6):
        c = S[i] + jet_mul(delta, FJ[i])
        if spec.mix:
            # the product rule misses the curvature term (Df f) tau'_eps
            # tau'_j of the composed second derivative
            clo = c.lo.copy()
            chi = c.hi.copy()
            base = dff[i] * tp[spec.eidx]
            for j in range(ngrad):
                corr = base * tp[j]
                add = Interval(clo[1 + ngrad + j], chi[1 + ngrad + j]) + corr
                clo[1 + ngrad + j], chi[1 + ngrad + j] = add.lo, add.hi
            c = Jet(spec, clo, chi if spec.interval else None)
        out.append(c)
    return out


def _drift_rate(box, mu: float) -> Interval:
    """Enclosure of (dH0/dt)/eps over a state box.

    Along the flow the autonomous energy changes at the exact rate
    dH0/dt = (q - 1) ((P_X + Y) Omega_X + (P_Y - X) Omega_Y) with
    q = 1/(1 + eps cos theta), and q - 1 = -eps cos theta * q carries an
    explicit factor of eps.  Dividing it out keeps the rate O(1) and
    makes the accumulated integral a two-sided drift bound that is valid
    down to eps = 0.
    """
    X, Y, PX, PY, TH, EPS = box
    o_x, o_y = omega_gradient(X, Y, mu)
    c = TH.cos()
    q = Interval(1.0) / (Interval(1.0) + EPS * c)
    return -(c * q) * ((PX + Y) * o_x + (PY - X) * o_y)


def _drift_quadrature(res: StepResult, mu: float, a: float, b: float,
                      nseg=None, seg: float = 1e-3):
    """Enclosure of the integral of the eps-free energy rate over the
    step time range [a, b], by composite interval quadrature on the
    dense Taylor output.

    The segment count scales with the time span so the angle sweep per
    segment, and with it the cos(theta) wrap, stays uniform across steps
    of different lengths; seg sets the target segment length."""
    total = Interval(0.0)
    if b <= a:
        return total
    if nseg is None:
        nseg = max(4, math.ceil((b - a) / seg))
    for k in range(nseg):
        t0 = a + (b - a) * k / nseg
        t1 = a + (b - a) * (k + 1) / nseg
        box = [e.val() for e in res.eval(Interval(t0, t1))]
        total = total + _drift_rate(box, mu) * (Interval(t1) - Interval(t0))
    return total


def _tighten(fat, center, offsets):
    """Mean-value tightening of the value slots of the fat jets.

    Every trajectory from the seed box satisfies the mean value identity
    around the center trajectory, so the fat value slots may be
    intersected with center value + gradient-over-box times seed offset.
    When mixed slots are carried the same identity tightens the
    designated gradient column, since the mixed slots are exactly its
    partial derivatives over the box.
    """
    from .errors import BlowUp

    out = []
    for jf, jc in zip(fat, center):
        spec = jf.spec
        acc = jc.val()
        for j, off in enumerate(offsets):
            acc = acc + jf.grad(j) * off
        tight = acc.intersection(jf.val())
        if tight is None:
            raise BlowUp("mean-value and direct enclosures disagree")
        lo = jf.lo.copy()
        hi = jf.hi.copy()
        lo[0], hi[0] = tight.lo, tight.hi
        if spec.mix:
            acc_e = jc.grad(spec.eidx)
            for j, off in enumerate(offsets):
                acc_e = acc_e + jf.mix(j) * off
            te = acc_e.intersection(jf.grad(spec.eidx))
            if te is None:
                raise BlowUp("mean-value and direct gradients disagree")
            lo[1 + spec.eidx], hi[1 + spec.eidx] = te.lo, te.hi
        out.append(Jet(jf.spec, lo, hi))
    return out


def _flow_to_section(state, center, offsets, mu: float, cfg, coef, t_min,
                     t_max, drift_seg: float = 1e-3):
    """Advance the fat jets and the lockstep center trajectory to the
    first transversal crossing of the section offset after the minimum
    time; returns (fat crossing jets, center crossing jets, drift
    enclosure, time)."""
    state = _tighten(state, center, offsets)
    t = 0.0
    sign0 = 0
    drift = Interval(0.0)
    while t < t_max:
        h_goal = None
        attempt = 0
        while True:
            res = taylor_step(state, mu, cfg, h_goal=h_goal)
            h = res.h
            cres = taylor_step(center, mu, cfg, h_force=h)
            if t + h <= t_min:
                break  # within the guard window, no monitoring yet
            lo_watch = max(t_min - t, 0.0)
            if sign0 == 0:
                sign0 = _strict_sign_at(res, coef, lo_watch)
                if sign0 == 0:
                    raise TangentialCrossing(
                        "section offset sign undetermined after the minimum time"
                    )
            s_end = _strict_sign_at(res, coef, h)
            if s_end == sign0:
                if _certify_sign(res, coef, lo_watch, h, sign0):
                    break
            elif s_end == -sign0:
                lo, hi = _bracket_crossing(res, coef, sign0)
                if _certify_sign(res, coef, lo_watch, lo, sign0):
                    cross = _crossing_state(res, coef, Interval(lo, hi), mu)
                    clo, chi = _bracket_crossing(cres, coef, sign0)
                    ccross = _crossing_state(cres, coef, Interval(clo, chi), mu)
                    cross = _tighten(cross, ccross, offsets)
                    drift = drift + _drift_quadrature(res, mu, 0.0, lo,
                                                      seg=drift_seg)
                    tail = _drift_rate(
                        [e.val() for e in res.eval(Interval(lo, hi))], mu
                    )
                    drift = drift + Interval(0.0, hi - lo) * tail
                    return cross, ccross, drift, Interval(t) + Interval(lo, hi)
            # undecided: either a tangency or the step is too coarse
            attempt += 1
            h_goal = h / 2
            if attempt > 24:
                raise TangentialCrossing(
                    "section offset sign could not be certified at any step size"
                )
        drift = drift + _drift_quadrature(res, mu, 0.0, res.h, seg=drift_seg)
        state = _tighten(res.out, cres.out, offsets)
        center = cres.out
        t += res.h
    raise NoCrossing(f"no section crossing within the time budget {t_max}")


def _flow_to_section_fast(state, mu: float, cfg, coef, t_min: float, t_max: float):
    """Point-mode crossing: sign change detection plus Newton in time."""
    t = 0.0
    g_prev = None
    while t < t_max:
        res = taylor_step(state, mu, cfg, fast=True)
        h = res.h
        g0 = float(_g_jet(state, coef).lo[..., 0])
        g1 = float(_g_jet(res.out, coef).lo[..., 0])
        if t + h > t_min and g_prev is not None and g0 * g1 < 0.0:
            tau = h * g0 / (g0 - g1)
            for _ in range(50):
                z = res.eval(tau)
                g = float(_g_jet(z, coef).lo[..., 0])
                f = field_jets(z, mu)
                gd = float((f[0] * coef[0] + f[1] * coef[1]).lo[..., 0])
                if gd == 0.0:
                    raise TangentialCrossing("zero section speed at the crossing")
                step = g / gd
                tau -= step
                if abs(step) < 1e-15:
                    break
            # the derivative slots must account for the seed dependence
            # of the crossing time, not just the fixed-time flow
            z = _crossing_state(res, coef, tau, mu)
            return z, t + tau
        g_prev = g0
        state = res.out
        t += h
    raise NoCrossing(f"no section crossing within the time budget {t_max}")


def section_map(
    src: Chart,
    dst: Chart,
    domain,
    eps,
    rigor: str = "rigorous",
    cfg: IntegratorConfig = None,
    t_min: float = 1e-3,
    t_max: float = 40.0,
    mixed: bool = False,
    drift_seg: float = 1e-3,
    derivatives: bool = True,
) -> SectionMapResult:
    """Local form of the flow from the source chart to the first
    transversal crossing of the destination section.

    domain is a box (or point) in source local coordinates (x, y, I,
    theta); eps an Interval (or float).  The rigorous mode seeds one jet
    per local direction plus eps, flows the whole box, and returns the
    enclosure of the image in destination coordinates together with the
    interval Jacobian (and on request the mixed second derivative with
    eps).  The fast mode runs the identical pipeline in point mode.
    """
    if src.mu != dst.mu:
        raise ValueError("charts use different mass parameters")
    mu = src.mu
    coef = dst.section.offset_coefficients()
    if rigor == "fast":
        cfg = cfg or IntegratorConfig(order=16, tol=1e-15, h_max=0.5)
        if derivatives:
            spec = JetSpec(5, eidx=4, mix=mixed, interval=False)
            v = [Jet.seed(spec, float(domain[i]), i) for i in range(4)]
            ej = Jet.seed(spec, float(eps), 4)
        else:
            # value-only jets: several times cheaper when the caller
            # just wants the point image, e.g. sampling sweeps
            spec = JetSpec(0, interval=False)
            v = [Jet.const(spec, float(domain[i])) for i in range(4)]
            ej = Jet.const(spec, float(eps))
        amb = from_local(src, v, ej)
        state = [*amb, ej]
        z, t_cross = _flow_to_section_fast(state, mu, cfg, coef, t_min, t_max)
        img = to_local(dst, z[:5], z[5], check=False)
        image = [float(c.lo[..., 0]) for c in img]
        if not derivatives:
            return SectionMapResult(image, None, None, float(t_cross))
        jac = np.array([[float(c.lo[1 + j]) for j in range(5)] for c in img])
        mix = (
            np.array([[float(c.lo[6 + j]) for j in range(4)] for c in img])
            if mixed
            else None
        )
        return SectionMapResult(image, jac, mix, float(t_cross))
    if rigor != "rigorous":
        raise ValueError("rigor must be 'rigorous' or 'fast'")
    cfg = cfg or IntegratorConfig()
    spec = JetSpec(5, eidx=4, mix=mixed, interval=True)
    dom = [d if isinstance(d, Interval) else Interval(float(d)) for d in domain]
    epsi = eps if isinstance(eps, Interval) else Interval(float(eps))
    v = [Jet.seed(spec, dom[i], i) for i in range(4)]
    ej = Jet.seed(spec, epsi, 4)
    state = [*from_local(src, v, ej), ej]
    mids = [d.mid() for d in dom] + [epsi.mid()]
    offsets = [
        Interval(d.lo, d.hi) - m for d, m in zip([*dom, epsi], mids)
    ]
    vc = [Jet.seed(spec, Interval(mids[i]), i) for i in range(4)]
    ejc = Jet.seed(spec, Interval(mids[4]), 4)
    center = [*from_local(src, vc, ejc), ejc]
    cross, ccross, drift, t_cross = _flow_to_section(
        state, center, offsets, mu, cfg, coef, t_min, t_max,
        drift_seg=drift_seg,
    )
    img = to_local(dst, cross[:5], cross[5], check=False)
    img_c = to_local(dst, ccross[:5], ccross[5], check=False)
    image = []
    jrows_lo, jrows_hi = [], []
    for i in range(4):
        acc = img_c[i].val()
        for j in range(5):
            acc = acc + img[i].grad(j) * offsets[j]
        tight = acc.intersection(img[i].val())
        image.append(tight if tight is not None else img[i].val())
        row = [img[i].grad(j) for j in range(5)]
        if mixed:
            acc_e = img_c[i].grad(4)
            for j in range(5):
                acc_e = acc_e + img[i].mix(j) * offsets[j]
            te = acc_e.intersection(row[4])
            if te is not None:
                row[4] = te
        jrows_lo.append([r.lo for r in row])
        jrows_hi.append([r.hi for r in row])
    # the action image also satisfies the exact energy-transport identity
    # I_out = I_in + (h_src - h_dst) + eps * drift, usually much tighter
    # than the propagated jets
    ident = (
        dom[2]
        + (Interval(src.h_ref) - Interval(dst.h_ref))
        + Interval(epsi.lo, epsi.hi) * drift
    )
    tight_i = ident.intersection(image[2])
    if tight_i is not None:
        image[2] = tight_i
    jac = IMat(np.array(jrows_lo), np.array(jrows_hi))
    mix = (
        IMat(
            np.array([[c.mix(j).lo for j in range(4)] for c in img]),
            np.array([[c.mix(j).hi for j in range(4)] for c in img]),
        )
        if mixed
        else None
    )
    return SectionMapResult(image, jac, mix, t_cross, drift)
