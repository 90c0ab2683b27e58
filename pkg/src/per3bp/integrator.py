"""Validated and fast Taylor integration of the extended equations of
motion.

A validated step produces the Taylor polynomial seeded at the current
jet state, a Picard-verified rough enclosure of the solution segment,
and the Lagrange remainder from the (p+1)-st coefficient over that
enclosure, so evaluation anywhere inside the step is rigorous.  Long
rigorous runs keep the value set in a parallelepiped representation
(point center + orthogonalized frame times an interval box) to control
the wrapping effect, while per-step variational jets are composed into
the accumulated Jacobian.

The fast integrator is the identical code path in point mode with the
validation stages skipped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BlowUp, SingularPosition, StepUnderflow
from .ival import IMat, Interval, v_down, v_up
from .jets import Jet, JetSpec
from .model import ModelParams
from .taylor import IEPS, ITH, NVARS, FlowSeries, field_jets

_H_GRID = 2.0**-26  # steps snap to this grid so elapsed times add exactly


@dataclass(frozen=True)
class IntegratorConfig:
    order: int = 20
    h_max: float = 0.05  # remainders over the rough tube degrade fast above this
    tol: float = 1e-14
    representation: str = "parallelepiped"  # or "box"
    blowup_budget: float = 1e-2
    h_min: float = 1e-10
    rem_tol: float = 1e-12  # cap on the remainder term of one step

    def __post_init__(self):
        if self.order < 2 or self.tol <= 0:
            raise ValueError("order must be >= 2 and tol > 0")
        if self.representation not in ("parallelepiped", "box"):
            raise ValueError("unknown set representation")


@dataclass(frozen=True)
class FlowEnclosure:
    state: tuple  # Intervals (X, Y, P_X, P_Y, theta)
    jac: IMat  # 6x6, d(state, eps)/d(state0, eps)
    time: Interval
    eps: Interval


class StepResult:
    """One Taylor step: polynomial, validated enclosure, remainder."""

    __slots__ = ("series", "h", "rem", "rough", "out", "spec")

    def __init__(self, series, h, rem, rough, out, spec):
        self.series = series
        self.h = h
        self.rem = rem  # list of (p+1)-st coefficient jets, or None (fast)
        self.rough = rough  # Picard enclosure jets over [0, h], or None
        self.out = out  # jets at time h
        self.spec = spec

    def eval(self, tau):
        """Rigorous jets at local time tau (float or Interval in [0, h])."""
        p = self.series.max_order
        vals = self.series.eval_poly(tau, p)
        if self.rem is None:
            return vals
        tpow = (tau if isinstance(tau, Interval) else Interval(float(tau))) ** (p + 1)
        return [v + r * tpow for v, r in zip(vals, self.rem)]

    def eval_var(self, tau, i: int):
        """Rigorous jet of a single coordinate at local time tau."""
        p = self.series.max_order
        val = self.series.eval_poly(tau, p, var=i)
        if self.rem is None:
            return val
        tpow = (tau if isinstance(tau, Interval) else Interval(float(tau))) ** (p + 1)
        return val + self.rem[i] * tpow


def _snap(h: float) -> float:
    return max(math.floor(h / _H_GRID), 1) * _H_GRID


def _heuristic_h(series: FlowSeries, order: int, cfg: IntegratorConfig) -> float:
    h = cfg.h_max
    for i in range(NVARS):
        for k in (order, order - 1):
            c = series.state[i]
            m = float(np.max(np.abs(c.lo[k, 0:1])))
            if series.spec.interval:
                m = max(m, float(np.max(np.abs(c.hi[k, 0:1]))))
            if m > 0.0:
                h = min(h, 0.85 * (cfg.tol / m) ** (1.0 / k))
    return h


def _inflate_jets(jets, frac=0.1, abs_=1e-13):
    out = []
    for j in jets:
        w = j.hi - j.lo
        d = frac * w + abs_
        out.append(Jet(j.spec, v_down(j.lo - d), v_up(j.hi + d)))
    return out


def _widen_violations(cand: Jet, new: Jet, frac=0.05, abs_=1e-14) -> Jet:
    """Inflate only the components where the Picard image escapes the
    candidate; touching converged components would keep moving the
    targets of the slots slaved to them and the iteration would chase
    its own tail."""
    lo = np.minimum(cand.lo, new.lo)
    hi = np.maximum(cand.hi, new.hi)
    d = frac * (hi - lo) + abs_
    viol = (new.lo < cand.lo) | (new.hi > cand.hi)
    out_lo = np.where(viol, v_down(lo - d), cand.lo)
    out_hi = np.where(viol, v_up(hi + d), cand.hi)
    return Jet(cand.spec, out_lo, out_hi)


def rough_enclosure(jets, mu: float, span: Interval, max_tries: int = 30):
    """Picard-validated enclosure of the (augmented) solution over the
    local time span (an interval containing 0); None on failure."""
    f0 = field_jets(jets, mu)
    cand = [z + f * span for z, f in zip(jets, f0)]
    cand = _inflate_jets(cand, frac=0.05, abs_=1e-14)
    for _ in range(max_tries):
        try:
            f = field_jets(cand, mu)
        except SingularPosition:
            # the candidate tube swallowed a primary; a smaller step is
            # needed, which the caller arranges on a None return
            return None
        new = [z + fi * span for z, fi in zip(jets, f)]
        if all(c.contains(n) for c, n in zip(cand, new)):
            return new
        cand = [_widen_violations(c, n) for c, n in zip(cand, new)]
    return None


def taylor_step(
    jets, mu: float, cfg: IntegratorConfig, h_goal=None, fast=False, h_force=None
):
    """One step from jet-valued initial data; h_goal caps the step size,
    h_force pins it exactly (no halving on validation failure)."""
    spec = jets[0].spec
    order = cfg.order
    series = FlowSeries(spec, mu, order)
    series.seed(jets)
    series.extend_to(order)
    if h_force is not None:
        h = h_force
    else:
        h = min(_heuristic_h(series, order, cfg), cfg.h_max)
        if h_goal is not None and h >= h_goal:
            h = h_goal  # land exactly on the requested time
        else:
            h = _snap(h)
    if fast:
        out = series.eval_poly(h, order + 1)
        return StepResult(series, h, None, None, out, spec)
    while True:
        rough = rough_enclosure(jets, mu, Interval(0.0, h))
        if rough is not None:
            rem_series = FlowSeries(spec, mu, order + 1)
            rem_series.seed(rough)
            rem_series.extend_to(order)
            rem = [rem_series.state[i].coeff(order + 1) for i in range(NVARS)]
            hpow = Interval(h) ** (order + 1)
            # the heuristic judges convergence from the point series, but
            # the remainder lives on the rough tube; close to a primary
            # the tube coefficients grow much faster, so reject the step
            # whenever the remainder term is no longer negligible
            rem_mag = max(
                float(np.max(np.maximum(np.abs(r.lo[0]), np.abs(r.hi[0]))))
                for r in rem
            ) * float(hpow.mag())
            if rem_mag <= cfg.rem_tol or h_force is not None:
                break
        elif h_force is not None:
            raise StepUnderflow("validation failed at the pinned step size")
        h = _snap(h / 2)
        if h <= cfg.h_min:
            raise StepUnderflow("validated step size underflow")
    out = [v + r * hpow for v, r in zip(series.eval_poly(h, order), rem)]
    for i in range(NVARS):
        w_in = float(np.max(jets[i].hi[..., 0] - jets[i].lo[..., 0]))
        w_out = float(np.max(out[i].hi[..., 0] - out[i].lo[..., 0]))
        if w_out - w_in > cfg.blowup_budget:
            raise BlowUp(f"enclosure diameter budget exceeded in coordinate {i}")
    return StepResult(series, h, rem, rough, out, spec)


# ---------------------------------------------------------------------
# fast (non-rigorous) propagation
# ---------------------------------------------------------------------


def integrate_fast(z0, eps: float, t: float, mu: float = None, cfg=None, jac=False):
    """Point integration over signed duration t; optionally the 6x6
    Jacobian with respect to (state, eps) via variational jets."""
    mu = ModelParams().mu if mu is None else mu
    cfg = cfg or IntegratorConfig(order=16, tol=1e-15, h_max=0.5)
    spec = JetSpec(6 if jac else 0, interval=False)
    vals = [*np.asarray(z0, dtype=float), float(eps)]
    if jac:
        jets = [Jet.seed(spec, v, i) for i, v in enumerate(vals)]
    else:
        jets = [Jet.const(spec, v) for v in vals]
    sign = 1.0 if t >= 0 else -1.0
    remaining = abs(float(t))
    while remaining > 0.0:
        order = cfg.order
        series = FlowSeries(spec, mu, order)
        series.seed(jets)
        series.extend_to(order)
        h = min(_heuristic_h(series, order, cfg), remaining, cfg.h_max)
        if remaining - h < 1e-15 * abs(t):
            h = remaining
        jets = series.eval_poly(sign * h, order + 1)
        remaining -= h
    state = np.array([float(j.lo[..., 0]) for j in jets[:5]])
    if jac:
        J = np.array([j.lo[1:7] for j in jets])
        return state, J
    return state


# ---------------------------------------------------------------------
# rigorous propagation with wrapping control
# ---------------------------------------------------------------------


def inverse_enclosure(B: np.ndarray) -> IMat:
    """Rigorous enclosure of the inverse of a well-conditioned point matrix."""
    n = B.shape[0]
    R = np.linalg.inv(B)
    E = IMat(np.eye(n)) - IMat(R) @ IMat(B)
    from .ival import mat_norm  # local import to avoid cycle noise

    kappa = mat_norm(E).hi
    if kappa >= 1.0:
        raise BlowUp("frame matrix inverse could not be enclosed")
    nR = mat_norm(IMat(R)).hi
    rad = nR * kappa / (1.0 - kappa)
    pad = np.full((n, n), rad * (1.0 + 1e-12))
    return IMat(v_down(R - pad), v_up(R + pad))


class RigorousOrbit:
    """Driver holding the doubleton value set and accumulated Jacobian."""

    def __init__(self, z0, eps, mu=None, cfg=None):
        self.mu = ModelParams().mu if mu is None else mu
        self.cfg = cfg or IntegratorConfig()
        z0 = [c if isinstance(c, Interval) else Interval(float(c)) for c in z0]
        eps = eps if isinstance(eps, Interval) else Interval(float(eps))
        box = [*z0, eps]
        self.center = np.array([b.mid() for b in box])
        self.frame = np.eye(NVARS)
        dev_lo = np.array([b.lo for b in box]) - self.center
        dev_hi = np.array([b.hi for b in box]) - self.center
        self.dev = (dev_lo, dev_hi)
        self.jac = IMat(np.eye(NVARS))
        self.time = 0.0
        self.eps = eps
        self.last_step = None
        self._spec = JetSpec(6, interval=True)
        self._pspec = JetSpec(0, interval=True)

    def value_box(self):
        """Current enclosure of (state, eps) as a list of Intervals."""
        vlo, vhi = IMat(self.frame).mat_vec(*self.dev)
        lo = v_down(self.center + vlo)
        hi = v_up(self.center + vhi)
        return [Interval(lo[i], hi[i]) for i in range(NVARS)]

    def energy_enclosure(self) -> Interval:
        """Enclosure of the energy over the current value set.

        Uses the mean value form with the gradient contracted against the
        frame before meeting the deviation box, so the large deviation
        component along the (energy-preserving) unstable direction meets
        a near-zero coefficient instead of the full gradient."""
        from .model import hamiltonian

        box = self.value_box()
        jets = [Jet.seed(self._spec, b, i) for i, b in enumerate(box)]
        hj = hamiltonian(jets[0], jets[1], jets[2], jets[3], jets[4], self.mu, jets[5])
        c = [Interval(v) for v in self.center]
        acc = hamiltonian(c[0], c[1], c[2], c[3], c[4], self.mu, c[5])
        for j in range(NVARS):
            coef = Interval(0.0)
            for i in range(NVARS):
                coef = coef + hj.grad(i) * float(self.frame[i, j])
            acc = acc + coef * Interval(self.dev[0][j], self.dev[1][j])
        direct = hj.val()
        out = acc.intersection(direct)
        return out if out is not None else direct

    def step(self, h_goal=None):
        box = self.value_box()
        seeds = [Jet.seed(self._spec, b, i) for i, b in enumerate(box)]
        res = taylor_step(seeds, self.mu, self.cfg, h_goal=h_goal)
        cseeds = [Jet.const(self._pspec, Interval(c)) for c in self.center]
        cres = taylor_step(cseeds, self.mu, self.cfg, h_force=res.h)
        J_step = IMat(
            np.array([j.lo[1:7] for j in res.out]),
            np.array([j.hi[1:7] for j in res.out]),
        )
        if self.cfg.representation == "box":
            img = [j.val() for j in res.out]
            self.center = np.array([iv.mid() for iv in img])
            self.frame = np.eye(NVARS)
            self.dev = (
                np.array([iv.lo for iv in img]) - self.center,
                np.array([iv.hi for iv in img]) - self.center,
            )
        else:
            c_img_lo = np.array([j.lo[0] for j in cres.out])
            c_img_hi = np.array([j.hi[0] for j in cres.out])
            new_center = 0.5 * (c_img_lo + c_img_hi)
            r_lo = v_down(c_img_lo - new_center)
            r_hi = v_up(c_img_hi - new_center)
            M = J_step @ IMat(self.frame)
            Q, _ = np.linalg.qr(M.mid())
            Binv = inverse_enclosure(Q)
            BM = Binv @ M
            s_lo, s_hi = BM.mat_vec(*self.dev)
            t_lo, t_hi = Binv.mat_vec(r_lo, r_hi)
            self.dev = (v_down(s_lo + t_lo), v_up(s_hi + t_hi))
            self.center = new_center
            self.frame = Q
            # intersect with the direct image for extra tightness
            box_new = self.value_box()
            img = [j.val() for j in res.out]
            for i in range(NVARS):
                if box_new[i].intersection(img[i]) is None:
                    raise BlowUp("doubleton and direct image disagree")
        for i, iv in enumerate(self.value_box()):
            if iv.width() > self.cfg.blowup_budget:
                raise BlowUp(f"enclosure diameter budget exceeded ({i})")
        self.jac = J_step @ self.jac
        self.time += res.h
        self.last_step = res
        return res

    def run(self, duration: float):
        if duration < 0:
            raise ValueError("rigorous integration runs forward only")
        target = float(duration)
        while self.time < target:
            self.step(h_goal=target - self.time)
        return self


def integrate_rigorous(z0, eps, t: float, cfg=None, mu=None) -> FlowEnclosure:
    """Enclose the flow of the box z0 (5 coordinates) over duration t for
    every eccentricity in eps."""
    orb = RigorousOrbit(z0, eps, mu=mu, cfg=cfg)
    if t == 0.0:
        box = orb.value_box()
        return FlowEnclosure(tuple(box[:5]), orb.jac, Interval(0.0), orb.eps)
    orb.run(float(t))
    box = orb.value_box()
    return FlowEnclosure(
        tuple(box[:5]), orb.jac, Interval(orb.time), orb.eps
    )
