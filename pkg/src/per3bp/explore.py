"""Non-rigorous exploration stage of the two-step procedure.

This module prepares everything the rigorous stage consumes: the planar
periodic orbit at the working energy level, a symmetric homoclinic
connection that loops around the smaller primary, a skeleton of
transverse sections with fitted local frames along it, and the
overlapping window grids on the entry strips.  Every output is frozen
to plain floats and serialized, so the certification never depends on
how these numbers were produced.

The homoclinic is found by single shooting along the unstable
eigendirection of the orbit's monodromy.  The flow is reversible under
(X, Y, P_X, P_Y, t) -> (X, -Y, -P_X, P_Y, -t), so a trajectory that
leaves the unstable fiber and crosses the symmetry plane {Y = 0,
P_X = 0} is automatically homoclinic: the returning half is the mirror
image of the outgoing one.  The shooting condition is therefore P_X = 0
at the perpendicular crossing on the far side of the smaller primary.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .charts import (
    Chart,
    chart_to_dict,
    fit_chart,
    from_local,
    make_chart,
    section_at,
    section_map,
    to_local,
)
from .errors import NoConvergence, OverlapInfeasible, WrongTopology
from .integrator import IntegratorConfig, integrate_fast, taylor_step
from .jets import Jet, JetSpec
from .model import ModelParams, hamiltonian, libration_point, omega

__all__ = [
    "LyapunovOrbit",
    "HomoclinicTrace",
    "SectionChartSet",
    "GridWindow",
    "WindowGrid",
    "find_lyapunov",
    "shoot_homoclinic",
    "anchor_chart",
    "fit_section_charts",
    "build_grids",
    "write_artifacts",
    "mirror_state",
    "DESK_DIMS",
    "FULL_DIMS",
]

_FAST_CFG = IntegratorConfig(order=16, tol=1e-15, h_max=0.5)

#: windows per strip used by the desk-scale runs and by the full-scale
#: construction, as (action rows, angle columns) per transition class
DESK_DIMS = {"uu": (4, 6), "dd": (4, 6), "ud": (4, 2), "du": (4, 2)}
FULL_DIMS = {"uu": (16, 30), "dd": (16, 30), "ud": (16, 4), "du": (16, 4)}

#: connecting-sequence lengths by transition and angle class; class 1
#: covers windows past the strip's center angle (they shift left on the
#: way back), class 2 the remainder (they shift right)
STEPS_TABLE = {
    "uu": (50, 66),
    "dd": (50, 66),
    "ud": (58, 74),
    "du": (58, 74),
}


def mirror_state(z):
    """Image of a state under the reversing symmetry (time reversed)."""
    return np.array([z[0], -z[1], -z[2], z[3], -z[4]])


# ---------------------------------------------------------------------
# point-mode flight with event collection
# ---------------------------------------------------------------------


def _fly(z0, mu, t_end, eval_times=(), sample_dt=None, cfg=None):
    """Flow a point forward collecting {Y = 0} crossings on the way.

    Returns (crossings, states, samples): crossings as (time, state)
    pairs refined by bisection inside the step polynomial, states the
    trajectory at the requested eval_times, samples a uniform-dt dump
    (always including the initial point).
    """
    cfg = cfg or _FAST_CFG
    spec = JetSpec(0, interval=False)
    st = [Jet.const(spec, float(v)) for v in [*z0, 0.0]]
    pending = sorted(float(t) for t in eval_times)
    states = {}
    crossings = []
    samples = []
    if sample_dt:
        samples.append((0.0, [float(v) for v in z0]))
    next_sample = sample_dt if sample_dt else None
    t = 0.0

    def point(res, tau):
        return [float(j.lo[..., 0]) for j in res.eval(tau)[:5]]

    while t < t_end:
        res = taylor_step(st, mu, cfg, fast=True)
        h = res.h
        if t + h > t_end:
            h = t_end - t
            res = taylor_step(st, mu, cfg, fast=True, h_force=h)
        y0 = float(st[1].lo[..., 0])
        y1 = float(res.out[1].lo[..., 0])
        if y0 * y1 < 0.0:
            a, b = 0.0, h
            fa = y0
            for _ in range(80):
                m = 0.5 * (a + b)
                ym = float(res.eval(m)[1].lo[..., 0])
                if fa * ym <= 0.0:
                    b = m
                else:
                    a, fa = m, ym
            tau = 0.5 * (a + b)
            crossings.append((t + tau, point(res, tau)))
        while pending and pending[0] <= t + h:
            tq = pending.pop(0)
            states[tq] = point(res, max(tq - t, 0.0))
        if sample_dt:
            while next_sample <= t + h + 1e-15:
                samples.append((next_sample, point(res, min(next_sample - t, h))))
                next_sample += sample_dt
        st = res.out
        t += h
    return crossings, states, samples


# ---------------------------------------------------------------------
# the periodic orbit
# ---------------------------------------------------------------------


@dataclass(frozen=True)
class LyapunovOrbit:
    """Planar periodic orbit around the collinear equilibrium, fixed by
    its perpendicular crossing of {Y = 0} on the side facing away from
    the smaller primary."""

    seed: tuple
    period: float
    energy: float
    lam: float
    unstable: tuple
    stable: tuple
    monodromy: np.ndarray
    mu: float

    @property
    def seed_array(self) -> np.ndarray:
        return np.asarray(self.seed)


def _momentum_from_energy(X, h0, mu):
    rad = 2.0 * (h0 + omega(X, 0.0, mu))
    if rad < 0.0:
        raise NoConvergence(f"energy level unreachable at X = {X}")
    return X - math.sqrt(rad)


def _half_crossing(X, h0, mu, cfg):
    z = np.array([X, 0.0, 0.0, _momentum_from_energy(X, h0, mu), 0.0])
    crossings, _, _ = _fly(z, mu, 4.0, cfg=cfg)
    if not crossings:
        raise NoConvergence("no return to the symmetry plane")
    return crossings[0]


def find_lyapunov(h0: float, mu: float = None, x_guess: float = None,
                  tol: float = 1e-13) -> LyapunovOrbit:
    """Periodic orbit at the requested energy by differential correction.

    The orbit is symmetric: the seed (X, 0, 0, P_Y) with P_Y solved from
    the energy is corrected in X until the half-period crossing of
    {Y = 0} is again perpendicular (P_X = 0 there).
    """
    mu = ModelParams().mu if mu is None else float(mu)
    cfg = _FAST_CFG
    x_l1 = libration_point(mu)
    if x_guess is not None:
        guesses = [float(x_guess)]
    else:
        guesses = [x_l1 + d for d in (0.008, 0.004, 0.012, 0.016, 0.024, 0.002)]
    last_err = None
    for X in guesses:
        try:
            for _ in range(40):
                t_half, zc = _half_crossing(X, h0, mu, cfg)
                f = zc[2]
                if abs(f) < tol:
                    break
                d = 1e-8 * max(abs(X), 1.0)
                _, z2 = _half_crossing(X + d, h0, mu, cfg)
                slope = (z2[2] - f) / d
                if slope == 0.0:
                    raise NoConvergence("flat correction slope")
                X -= f / slope
            else:
                raise NoConvergence("perpendicular-crossing correction stalled")
        except NoConvergence as err:
            last_err = err
            continue
        break
    else:
        raise NoConvergence(f"no periodic orbit found at energy {h0}: {last_err}")

    seed = np.array([X, 0.0, 0.0, _momentum_from_energy(X, h0, mu), 0.0])
    period = 2.0 * t_half
    z_end, J = integrate_fast(seed, 0.0, period, mu, jac=True)
    defect = float(np.linalg.norm(z_end[:4] - seed[:4]))
    if defect > 1e-10:
        raise NoConvergence(f"period closure defect {defect:.3e} too large")
    M = J[:4, :4]
    ev, vec = np.linalg.eig(M)
    order = np.argsort(-np.abs(ev))
    lam = ev[order[0]]
    if abs(lam.imag) > 1e-9 * abs(lam) or lam.real <= 1.0:
        raise NoConvergence("monodromy is not hyperbolic on the plane")
    lam = float(lam.real)

    def unit(v):
        v = np.real(v)
        v = v / np.linalg.norm(v)
        return v if v[0] > 0 or (v[0] == 0 and v[2] > 0) else -v

    v_u = unit(vec[:, order[0]])
    v_s = unit(vec[:, order[-1]])
    return LyapunovOrbit(
        tuple(float(c) for c in seed),
        float(period),
        float(hamiltonian(*seed, mu, 0.0)),
        lam,
        tuple(float(c) for c in v_u),
        tuple(float(c) for c in v_s),
        M,
        mu,
    )


# ---------------------------------------------------------------------
# the homoclinic connection
# ---------------------------------------------------------------------


@dataclass
class HomoclinicTrace:
    """Section skeleton along the homoclinic connection.

    times/states/labels hold the 75 section anchors: index 0 on the
    symmetry plane inside the entry strip, indices 50, 58, 66, 74 the
    returns to it after 0..3 extra revolutions around the periodic
    orbit.  theta is unwrapped flow time measured from the first anchor.
    """

    orbit: LyapunovOrbit
    s_root: float
    times: list
    states: list
    labels: list
    t_sym: float
    miss: float
    winding: float
    returns: dict
    offsets: dict
    energy_drift: float
    samples: np.ndarray

    #: anchor indices that sit on {Y = 0} by construction
    knots = (0, 8, 16, 25, 34, 42, 50, 58, 66, 74)


def _far_miss(z, mu, t_end, cfg):
    """P_X at the first {Y = 0} crossing beyond the smaller primary."""
    crossings, _, _ = _fly(z, mu, t_end, cfg=cfg)
    for t, zc in crossings:
        if zc[0] < mu - 1.0 and t > 1.0:
            return t, zc
    return None, None


def shoot_homoclinic(orbit: LyapunovOrbit, *, r: float = 1e-6,
                     miss_tol: float = 1e-8, sample_dt: float = 0.02,
                     cfg: IntegratorConfig = None) -> HomoclinicTrace:
    """Symmetric homoclinic connection of the periodic orbit.

    Shoots z(s) = seed - s * v_u along the unstable eigendirection and
    drives P_X at the perpendicular far crossing to zero, first at a
    scale where the root is well conditioned and then two revolutions
    earlier so that the initial anchor lands inside the radius-r entry
    strip.  The skeleton places 8 sections per revolution around the
    orbit and 9 per half of the excursion around the smaller primary.
    """
    cfg = cfg or _FAST_CFG
    mu = orbit.mu
    z0 = orbit.seed_array
    lam, T = orbit.lam, orbit.period
    v_u = np.array(orbit.unstable)
    x_l1 = libration_point(mu)

    def seed_state(s, direction):
        z = z0.copy()
        z[:4] = z[:4] + s * direction
        return z

    # pick the branch of the unstable fiber that reaches the smaller
    # primary: the other one leaves toward the interior region
    direction = None
    for cand in (-v_u[:4], v_u[:4]):
        crossings, _, samples = _fly(
            seed_state(1e-4, cand), mu, 2.2 * T, sample_dt=0.05, cfg=cfg
        )
        if min(p[1][0] for p in samples) < mu - 1.0 + 0.01:
            direction = cand
            break
    if direction is None:
        raise WrongTopology(
            "neither unstable branch reaches the smaller primary"
        )

    # coarse scan at a well-conditioned scale, then bisection + secant
    scan = np.geomspace(8e-5, 8e-4, 14)
    vals = [
        _far_miss(seed_state(s, direction), mu, 2.2 * T, cfg)[1] for s in scan
    ]
    # several sign changes can show up: shots that are far off brush the
    # primary and pick up large momenta at the watched crossing; the
    # turnaround root is the change with the gentlest endpoints
    bracket = None
    for a, fa, b, fb in zip(scan, vals, scan[1:], vals[1:]):
        if fa is not None and fb is not None and fa[2] * fb[2] < 0.0:
            if bracket is None or max(abs(fa[2]), abs(fb[2])) < bracket[4]:
                bracket = (a, fa[2], b, fb[2], max(abs(fa[2]), abs(fb[2])))
    if bracket is None:
        raise NoConvergence("no sign change of the symmetric-crossing miss")
    a, fa, b, fb = bracket[:4]
    for _ in range(12):
        m = 0.5 * (a + b)
        fm = _far_miss(seed_state(m, direction), mu, 2.2 * T, cfg)[1][2]
        if fa * fm <= 0.0:
            b, fb = m, fm
        else:
            a, fa = m, fm
    s_big, f_big = a, fa
    s_prev, f_prev = b, fb
    for _ in range(20):
        if f_big == f_prev:
            break
        s_next = s_big - f_big * (s_big - s_prev) / (f_big - f_prev)
        s_prev, f_prev = s_big, f_big
        s_big = s_next
        f_big = _far_miss(seed_state(s_big, direction), mu, 2.2 * T, cfg)[1][2]
        if abs(f_big) < 1e-12:
            break
    t_sym_big = _far_miss(seed_state(s_big, direction), mu, 2.2 * T, cfg)[0]

    # re-converge two revolutions earlier, inside the entry strip; the
    # miss there sits on a roundoff floor near 1e-9, so keep the best
    # iterate and stop once the secant stagnates
    t_end = t_sym_big + 2.0 * T + 1.0
    s = s_big / lam**2
    f = _far_miss(seed_state(s, direction), mu, t_end, cfg)[1][2]
    s_prev = s * (1.0 + 1e-4)
    f_prev = _far_miss(seed_state(s_prev, direction), mu, t_end, cfg)[1][2]
    s_best, f_best = (s, f) if abs(f) < abs(f_prev) else (s_prev, f_prev)
    for _ in range(30):
        if f == f_prev:
            break
        s_next = s - f * (s - s_prev) / (f - f_prev)
        s_prev, f_prev = s, f
        s = s_next
        f = _far_miss(seed_state(s, direction), mu, t_end, cfg)[1][2]
        if abs(f) < abs(f_best):
            s_best, f_best = s, f
        if abs(f) < miss_tol * 1e-2:
            break
    s, f = s_best, f_best
    if abs(f) > miss_tol:
        raise NoConvergence(
            f"symmetric-crossing miss {abs(f):.3e} above tolerance {miss_tol}"
        )

    # anchor the timeline at the first crossing of the symmetry plane
    crossings, _, _ = _fly(seed_state(s, direction), mu, 0.01, cfg=cfg)
    if not crossings:
        raise NoConvergence("shot does not start on the symmetry plane")
    t_q0, q0 = crossings[0]

    # outgoing half only: any residual miss at the symmetric crossing is
    # amplified by lam per revolution on the way back, so the returning
    # half is taken as the exact mirror image and the trailing
    # revolutions follow the periodic orbit, which the connection hugs
    # to within the shooting scale there
    t_half_end = t_sym_big + 2.0 * T - t_q0 + 0.3
    crossings, _, samples = _fly(q0, mu, t_half_end, sample_dt=sample_dt,
                                 cfg=cfg)
    far = [(t, z) for t, z in crossings if z[0] < mu - 1.0]
    right = [(t, z) for t, z in crossings if z[0] > x_l1]
    if not far:
        raise WrongTopology("trajectory never passes the smaller primary")
    t_sym, z_sym = min(far, key=lambda p: abs(p[1][2]))
    miss = abs(z_sym[2])

    def nearest_right(target):
        t, z = min(right, key=lambda p: abs(p[0] - target))
        if abs(t - target) > 0.35 * T:
            raise NoConvergence(
                f"missing symmetry-plane return near t = {target:.3f}"
            )
        return t, z

    knot_cross = [(0.0, list(q0))]
    knot_cross.append(nearest_right(T))
    knot_cross.append(nearest_right(2.0 * T))
    # the true connection crosses perpendicularly; store the symmetrized
    # state so both halves of the skeleton join at the same anchor
    z_anchor = [z_sym[0], 0.0, 0.0, z_sym[3], z_sym[4]]
    knot_cross.append((t_sym, z_anchor))
    half_steps = (8, 8, 9)

    half_times = []
    for (ta, _), (tb, _), n in zip(knot_cross, knot_cross[1:], half_steps):
        half_times.extend(ta + (tb - ta) * k / n for k in range(n))
    half_times.append(t_sym)

    # second pass over the outgoing half evaluates the interior anchors;
    # knots keep the bisected crossing states so they sit on {Y = 0}
    knot_idx = dict(zip((0, 8, 16, 25), knot_cross))
    interior = [t for i, t in enumerate(half_times) if i not in knot_idx]
    _, states_at, _ = _fly(q0, mu, t_sym + 0.01, eval_times=interior, cfg=cfg)
    half_states = [
        list(knot_idx[i][1]) if i in knot_idx else list(states_at[t])
        for i, t in enumerate(half_times)
    ]

    # one revolution of the orbit supplies the continuation anchors
    phases = [j * T / 8.0 for j in range(1, 8)]
    _, orbit_at, orbit_samples = _fly(z0, mu, 3.0 * T + 0.01,
                                      eval_times=phases,
                                      sample_dt=sample_dt, cfg=cfg)

    times, states = list(half_times), [list(z) for z in half_states]
    for i in range(26, 50):
        times.append(2.0 * t_sym - half_times[50 - i])
        states.append(list(mirror_state(half_states[50 - i])))
    times.append(2.0 * t_sym)
    states.append(list(mirror_state(q0)))
    for i in range(51, 75):
        j = (i - 50) % 8
        times.append(2.0 * t_sym + (i - 50) * T / 8.0)
        states.append(list(z0) if j == 0 else list(orbit_at[phases[j - 1]]))

    labels = []
    for i in range(75):
        if i == 0:
            labels.append("entry")
        elif i <= 16:
            labels.append("turn-out")
        elif i <= 33:
            labels.append("excursion")
        elif i <= 49:
            labels.append("turn-in")
        elif i in (50, 58, 66, 74):
            labels.append("return")
        else:
            labels.append("continuation")
    for z, t in zip(states, times):
        z[4] = t  # unwrapped angle, zero at the first anchor

    # stitch the dense samples: outgoing half, its mirror, three orbit
    # revolutions shifted to the tail
    half_samples = [(t, z) for t, z in samples if t <= t_sym]
    full_samples = list(half_samples)
    for t, z in reversed(half_samples[:-1]):
        full_samples.append((2.0 * t_sym - t, list(mirror_state(z))))
    for t, z in orbit_samples:
        if 0.0 < t <= 3.0 * T:
            full_samples.append((2.0 * t_sym + t, list(z)))

    # the excursion must wrap around the smaller primary
    seg = [p for p in full_samples
           if knot_cross[2][0] <= p[0] <= 2.0 * t_sym - knot_cross[2][0]]
    ang = np.unwrap(
        [math.atan2(z[1], z[0] - (mu - 1.0)) for _, z in seg]
    )
    winding = float((ang[-1] - ang[0]) / (2.0 * math.pi))
    if abs(winding) < 0.75:
        raise WrongTopology(
            f"excursion winds {winding:.2f} times around the smaller primary"
        )

    h0 = orbit.energy
    drift = max(
        abs(hamiltonian(*z, mu, 0.0) - h0) for _, z in full_samples
    )
    returns, offsets = {}, {}
    for k in (50, 58, 66, 74):
        returns[k] = (times[k], list(states[k]))
        offsets[k] = math.remainder(times[k] - times[0], 2.0 * math.pi)
    sample_rows = np.array(
        [[t, z[0], z[1], z[2], z[3], t] for t, z in full_samples]
    )
    return HomoclinicTrace(
        orbit, float(s), times, states, labels, t_sym, miss, winding,
        returns, offsets, float(drift), sample_rows,
    )


# ---------------------------------------------------------------------
# chart fitting along the skeleton
# ---------------------------------------------------------------------


@dataclass
class SectionChartSet:
    """Frozen local frames along the skeleton.

    anchor is the frame every connecting sequence starts and ends in;
    sections[i] (1-based index) the fitted frame at the i-th skeleton
    anchor; sequences maps each sequence length to the list of frame
    keys it passes through ("A" for the anchor)."""

    anchor: Chart
    lam: float
    sections: list
    sequences: dict
    times: list


def _provisional(anchor_state, mu) -> Chart:
    return make_chart(section_at(anchor_state), np.eye(4), mu=mu)


def anchor_chart(orbit: LyapunovOrbit) -> Chart:
    """Local frame at the perpendicular crossing of the periodic orbit.

    The (x, y) columns are the unit eigenvectors of the section return
    map, so the return derivative is diag(lam, 1/lam) there; the energy
    column follows the family of perpendicular crossings, which keeps
    the x, y coordinates of its fixed points at zero."""
    mu = orbit.mu
    prov = _provisional(orbit.seed, mu)
    res = section_map(
        prov, prov, (0.0, 0.0, 0.0, 0.0), 0.0, rigor="fast",
        t_min=0.75 * orbit.period, t_max=1.3 * orbit.period,
    )
    m = res.jac[:, :4]
    B = m[:2, :2]
    ev, vec = np.linalg.eig(B)
    iu, i_s = np.argmax(np.abs(ev)), np.argmin(np.abs(ev))
    lam = float(np.real(ev[iu]))

    def unit(v):
        v = np.real(v) / np.linalg.norm(np.real(v))
        return v if v[0] > 0 else -v

    v_u, v_s = unit(vec[:, iu]), unit(vec[:, i_s])
    family = np.linalg.solve(np.eye(2) - B, m[:2, 2])
    mm = np.zeros((4, 4))
    mm[:2, 0] = lam * v_u
    mm[:2, 1] = v_s / lam
    mm[:2, 2] = family
    mm[2, 2] = 1.0
    return fit_chart(prov.section, mm, lam=lam, mu=mu)


def fit_section_charts(trace: HomoclinicTrace, *, lam_floor: float = 1.01,
                       phase: float = 0.0,
                       cfg: IntegratorConfig = None) -> SectionChartSet:
    """Fit one local frame per skeleton section from the flow derivative.

    The unstable direction is transported forward from the anchor along
    the chain; the stable direction is transported backward from the
    return, where the skeleton rejoins the anchor section.  Forward
    transport of both would lose the stable direction: any component
    along the unstable one is magnified at every step, and across the
    excursion the two collapse.

    The energy column and the eccentricity shift satisfy affine
    recursions driven by the step derivatives; only their bounded
    solutions keep windows of nonzero action, or nonzero eccentricity,
    centered on the skeleton.  In the transported basis the recursions
    decouple into one expanding and one contracting scalar component,
    so the bounded solution comes from solving the expanding component
    backward and the contracting one forward, pinned to the anchor's
    exact energy column (and to zero shift) at both ends.

    The eccentricity forcing enters through cos(angle), so the fitted
    shifts depend on the angle at which the skeleton is traversed.
    phase sets that angle at the anchor departure; windows leaving the
    strip near pi/2 need charts fitted with phase = pi/2, and the strip
    near 3pi/2 flips the sign of the forcing."""
    mu = trace.orbit.mu
    anchor = anchor_chart(trace.orbit)
    n = len(trace.times)
    provs = [_provisional(z, mu) for z in trace.states]

    # forward pass: step Jacobians between consecutive provisional
    # frames (the first step starts in the anchor frame), transporting
    # the unstable direction as we go
    jacs, shifts = [None] * n, [None] * n
    u_dirs, growths = [None] * n, [None] * n
    u = np.array([1.0, 0.0])
    for i in range(1, n):
        src = anchor if i == 1 else provs[i - 1]
        v = [float(c) for c in to_local(src, trace.states[i - 1], 0.0)]
        v[3] += phase
        dt = trace.times[i] - trace.times[i - 1]
        for guard in (0.5, 0.85):
            res = section_map(
                src, provs[i], v, 0.0, rigor="fast", mixed=False,
                t_min=guard * dt, t_max=1.6 * dt + 0.2, cfg=cfg,
            )
            drift = math.hypot(res.image[0], res.image[1])
            if drift < 1e-5:
                break
        if drift >= 1e-5:
            raise NoConvergence(
                f"step {i} left the skeleton by {drift:.3e} in the section plane"
            )
        jacs[i] = res.jac[:, :4]
        shifts[i] = res.jac[:, 4]
        w = jacs[i][:2, :2] @ u
        growths[i] = float(np.hypot(*w))
        if not growths[i] > 0.0:
            raise NoConvergence(f"unstable direction vanished at step {i}")
        u = w / growths[i]
        u_dirs[i] = u

    # backward pass: at the last section the skeleton sits back on the
    # anchor section, whose frame provides the exact stable direction
    s_dirs = [None] * n
    s = np.asarray(anchor.A[:2, 1], dtype=float)
    s = s / np.hypot(*s)
    s_dirs[n - 1] = s
    for i in range(n - 1, 1, -1):
        try:
            w = np.linalg.solve(jacs[i][:2, :2], s)
        except np.linalg.LinAlgError:
            raise NoConvergence(f"singular step derivative at step {i}")
        s = w / np.hypot(*w)
        s_dirs[i - 1] = s

    def components(i, vec):
        """Coordinates of a section-plane vector in frame i."""
        basis = np.column_stack((u_dirs[i], s_dirs[i]))
        return np.linalg.solve(basis, vec)

    anchor_uv = np.column_stack((
        np.asarray(anchor.A[:2, 0], dtype=float),
        np.asarray(anchor.A[:2, 1], dtype=float),
    ))
    anchor_fam = np.linalg.solve(
        anchor_uv, np.asarray(anchor.A[:2, 2], dtype=float)
    )

    # each step is upper triangular in these frames: the unstable
    # component grows by growths[i] while the normal component picks up
    # a shear couple[i] and a multiplier b_step[i]
    couple, b_step = [0.0] * n, [0.0] * n
    for i in range(1, n):
        prev = anchor_uv[:, 1] if i == 1 else s_dirs[i - 1]
        a_i, b_i = components(i, jacs[i][:2, :2] @ prev)
        couple[i], b_step[i] = float(a_i), float(b_i)

    # bounded solutions of c_i = m_i c_{i-1} + b_i for the energy column
    # (drive from the step's energy coupling) and the eccentricity shift
    # (drive from the step's eps derivative); the contracting component
    # runs forward from the anchor values, the expanding one backward,
    # picking up the shear from the already known contracting part
    drive_c = [components(i, jacs[i][:2, 2]) for i in range(1, n)]
    drive_w = [components(i, shifts[i][:2]) for i in range(1, n)]
    eta_c, eta_w = [0.0] * n, [0.0] * n
    eta_c[0] = float(anchor_fam[1])
    for i in range(1, n):
        eta_c[i] = b_step[i] * eta_c[i - 1] + float(drive_c[i - 1][1])
        eta_w[i] = b_step[i] * eta_w[i - 1] + float(drive_w[i - 1][1])
    fam_end = components(n - 1, np.asarray(anchor.A[:2, 2], dtype=float))
    xi_c, xi_w = [0.0] * n, [0.0] * n
    xi_c[n - 1] = float(fam_end[0])
    for i in range(n - 1, 0, -1):
        xi_c[i - 1] = (
            xi_c[i] - couple[i] * eta_c[i - 1] - drive_c[i - 1][0]
        ) / growths[i]
        xi_w[i - 1] = (
            xi_w[i] - couple[i] * eta_w[i - 1] - drive_w[i - 1][0]
        ) / growths[i]

    sections = []
    for i in range(1, n):
        lam_i = max(growths[i], lam_floor)
        fam = xi_c[i] * u_dirs[i] + eta_c[i] * s_dirs[i]
        A = np.array([
            [u_dirs[i][0], s_dirs[i][0], fam[0], 0.0],
            [u_dirs[i][1], s_dirs[i][1], fam[1], 0.0],
            [0.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
        ])
        shift = xi_w[i] * u_dirs[i] + eta_w[i] * s_dirs[i]
        fitted = make_chart(
            provs[i].section, A, w=(shift[0], shift[1], 0.0, 0.0), mu=mu
        )
        sections.append(
            {"index": i, "time": trace.times[i], "lam": lam_i, "chart": fitted}
        )
    sequences = {
        k: ["A"] + [str(i) for i in range(1, k)] + ["A"]
        for k in (50, 58, 66, 74)
    }
    return SectionChartSet(anchor, trace.orbit.lam, sections, sequences,
                           list(trace.times))


# ---------------------------------------------------------------------
# window grids on the entry strips
# ---------------------------------------------------------------------


@dataclass(frozen=True)
class GridWindow:
    row: int
    col: int
    I_range: tuple
    theta_range: tuple
    cls: int
    steps: int


@dataclass(frozen=True)
class WindowGrid:
    name: str
    strip: str
    target: str
    rows: int
    cols: int
    center_theta: float
    windows: tuple
    I_overlap: float
    theta_overlap: float


def _axis(lo: float, hi: float, n: int, overlap: float):
    """n overlapping intervals tiling [lo, hi] exactly."""
    extent = hi - lo
    if n == 1:
        return [(lo, hi)]
    width = (extent + (n - 1) * overlap) / n
    if width <= overlap:
        raise OverlapInfeasible(
            f"{n} windows over extent {extent:.3e} cannot host overlap "
            f"{overlap:.3e}"
        )
    pitch = width - overlap
    out = [(lo + i * pitch, lo + i * pitch + width) for i in range(n - 1)]
    out.append((hi - width, hi))
    return out


def build_grids(dims: dict = None, *, c_h0: float = 1e-6, r: float = 1e-6,
                eps0: float = 1.6e-5, a_I: float = 1.0, a_theta: float = 10.0,
                overlap_factor: float = 2.0, half_width: float = 0.08,
                centers: dict = None, steps_table: dict = None) -> dict:
    """Overlapping window grids over [0, c_h0] x strip angles.

    The minimum admissible overlaps are eps0 * a_I * r along the action
    and a_theta * r along the angle; the grids use overlap_factor times
    those.  Windows past the strip's center angle belong to class 1 and
    are assigned the shorter sequence of their transition, the rest to
    class 2 with the longer one."""
    dims = DESK_DIMS if dims is None else dims
    centers = centers or {"u": math.pi / 2.0, "d": 3.0 * math.pi / 2.0}
    steps_table = steps_table or STEPS_TABLE
    ov_i = overlap_factor * eps0 * a_I * r
    ov_th = overlap_factor * a_theta * r
    grids = {}
    for name, (rows, cols) in dims.items():
        strip, target = name[0], name[1]
        center = centers[strip]
        i_rows = _axis(0.0, c_h0, rows, ov_i)
        th_cols = _axis(center - half_width, center + half_width, cols, ov_th)
        k1, k2 = steps_table[name]
        windows = []
        for row, (ilo, ihi) in enumerate(i_rows):
            for col, (tlo, thi) in enumerate(th_cols):
                cls = 1 if 0.5 * (tlo + thi) >= center else 2
                windows.append(GridWindow(
                    row, col, (ilo, ihi), (tlo, thi), cls,
                    k1 if cls == 1 else k2,
                ))
        grids[name] = WindowGrid(
            name, strip, target, rows, cols, center, tuple(windows),
            ov_i, ov_th,
        )
    return grids


# ---------------------------------------------------------------------
# artifacts
# ---------------------------------------------------------------------


def _freeze(x):
    return repr(float(x))


def chartset_to_dict(chartset: SectionChartSet, trace: HomoclinicTrace) -> dict:
    orbit = trace.orbit
    return {
        "version": 1,
        "mu": _freeze(orbit.mu),
        "h0": _freeze(orbit.energy),
        "period": _freeze(orbit.period),
        "lambda": _freeze(orbit.lam),
        "orbit_seed": [_freeze(c) for c in orbit.seed],
        "miss": _freeze(trace.miss),
        "winding": _freeze(trace.winding),
        "offsets": {str(k): _freeze(v) for k, v in trace.offsets.items()},
        "section_times": [_freeze(t) for t in chartset.times],
        "anchor": chart_to_dict(chartset.anchor),
        "sections": [
            {
                "index": s["index"],
                "time": _freeze(s["time"]),
                "lam": _freeze(s["lam"]),
                "chart": chart_to_dict(s["chart"]),
            }
            for s in chartset.sections
        ],
        "sequences": {str(k): v for k, v in chartset.sequences.items()},
    }


def grids_to_dict(grids: dict) -> dict:
    return {
        "version": 1,
        "grids": {
            name: {
                "strip": g.strip,
                "target": g.target,
                "rows": g.rows,
                "cols": g.cols,
                "center_theta": _freeze(g.center_theta),
                "I_overlap": _freeze(g.I_overlap),
                "theta_overlap": _freeze(g.theta_overlap),
                "windows": [
                    {
                        "row": w.row,
                        "col": w.col,
                        "I": [_freeze(w.I_range[0]), _freeze(w.I_range[1])],
                        "theta": [
                            _freeze(w.theta_range[0]),
                            _freeze(w.theta_range[1]),
                        ],
                        "class": w.cls,
                        "steps": w.steps,
                    }
                    for w in g.windows
                ],
            }
            for name, g in sorted(grids.items())
        },
    }


def write_artifacts(outdir: str, trace: HomoclinicTrace,
                    chartset: SectionChartSet, grids: dict,
                    meta: dict = None) -> dict:
    """Write charts.json, grids.json, and homoclinic.csv; returns paths."""
    os.makedirs(outdir, exist_ok=True)
    charts = chartset_to_dict(chartset, trace)
    grid_doc = grids_to_dict(grids)
    if meta:
        charts["meta"] = meta
        grid_doc["meta"] = meta
    paths = {
        "charts": os.path.join(outdir, "charts.json"),
        "grids": os.path.join(outdir, "grids.json"),
        "homoclinic": os.path.join(outdir, "homoclinic.csv"),
    }
    with open(paths["charts"], "w") as f:
        json.dump(charts, f, indent=1, sort_keys=True)
        f.write("\n")
    with open(paths["grids"], "w") as f:
        json.dump(grid_doc, f, indent=1, sort_keys=True)
        f.write("\n")
    with open(paths["homoclinic"], "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["t", "X", "Y", "P_X", "P_Y", "theta_unwrapped"])
        for row in trace.samples:
            writer.writerow([repr(float(c)) for c in row])
    return paths
