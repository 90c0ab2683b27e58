"""Random-walk energy paths steered through the strip classes.

The up and down strips give a controller two levers: an up-class
excursion raises the action by roughly eps times the drift constant, a
down-class one lowers it, and the mixed classes transfer between the
strips without a first-order action change.  Scheduling fair-coin
targets and steering the orbit through the matching class per step
makes the rescaled action trace a random walk, which after the Donsker
normalisation is compared against Brownian motion with drift.

Everything in this module is explicitly non-rigorous and never feeds
back into certificates.  Two idealisations keep the demonstration at
desk scale and are visible in the transition logs:

* Between excursions the orbit is assumed to wait on the periodic orbit
  until the true anomaly re-enters the departure strip, so each
  transition departs from a sampled strip angle rather than from the
  exact return angle of the previous one.  The waiting segments are not
  integrated; their first-order action change averages out along the
  orbit and is dropped.
* Excursions are hyperbolically unstable over their full flight time,
  so each one is realised as a pseudo-orbit: the flow is integrated
  section to section along the skeleton and the transverse coordinates
  are projected back to the strip radius at every section, the standard
  numerical surrogate for the shadowing orbit whose existence the
  certificates establish.  To keep thousands of transitions affordable
  the controller calibrates, per class and eccentricity, the realised
  action response across the departure strip by direct integration and
  interpolates between the calibration angles; a configurable subsample
  of transitions is re-flown exactly and logged alongside the
  interpolated value.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np

from .charts import section_map
from .errors import InsufficientSample, TrackingLost
from .explore import STEPS_TABLE

__all__ = [
    "K_CAP",
    "WalkSchedule",
    "EnergyPath",
    "Transition",
    "RouteSpec",
    "ClassTable",
    "make_schedule",
    "class_routes",
    "calibrate_classes",
    "fly_route",
    "steer_orbit",
    "synthetic_paths",
    "donsker_check",
    "time_scale",
    "write_paths_csv",
    "write_donsker_report",
]

#: desk cap on the number of walk steps regardless of the eccentricity
K_CAP = 10_000


# ---------------------------------------------------------------------
# schedules
# ---------------------------------------------------------------------


@dataclass(frozen=True)
class WalkSchedule:
    """Fair-coin target levels X0 + k mu eps + N_k sigma sqrt(eps).

    omega holds the +-1 coin flips, one per step; levels has K + 1
    entries and its increments are exactly mu eps +- sigma sqrt(eps).
    """

    X0: float
    mu: float
    sigma: float
    eps: float
    K: int
    omega: np.ndarray
    levels: np.ndarray
    seed: int


def make_schedule(X0: float, mu: float, sigma: float, eps: float,
                  seed: int = 0, cap: int = K_CAP) -> WalkSchedule:
    """Draw a fair-coin schedule of K = floor(1/eps) steps (desk-capped)."""
    if not eps > 0.0:
        raise ValueError("eps must be positive")
    if sigma < 0.0:
        raise ValueError("sigma must be nonnegative")
    K = min(int(math.floor(1.0 / eps)), int(cap))
    rng = np.random.default_rng(seed)
    omega = np.where(rng.random(K) < 0.5, -1, 1).astype(np.int64)
    steps = mu * eps + omega * (sigma * math.sqrt(eps))
    levels = X0 + np.concatenate([[0.0], np.cumsum(steps)])
    return WalkSchedule(X0, mu, sigma, eps, K, omega, levels, seed)


# ---------------------------------------------------------------------
# energy paths
# ---------------------------------------------------------------------


@dataclass(frozen=True)
class EnergyPath:
    """Rescaled action path on a uniform grid over [0, 1].

    The path is frozen at its stopping value after tau, the first grid
    time at which it leaves the open band."""

    t: np.ndarray
    X: np.ndarray
    eps: float
    gamma: float
    seed: int
    band: tuple
    stopped: bool
    tau: object  # float or None


def _apply_stop(levels: np.ndarray, band) -> tuple:
    lo, hi = band
    X = np.array(levels, dtype=float)
    outside = np.nonzero((X <= lo) | (X >= hi))[0]
    if outside.size == 0:
        return X, False, None
    j = int(outside[0])
    X[j:] = X[j]
    return X, True, j


def time_scale(eps: float, gamma: float = 2.0, alt: bool = False) -> float:
    """Physical flow-time horizon of one rescaled unit: eps**(-gamma) by
    default, gamma * eps**(-3/2) under the alternative scaling flag."""
    if alt:
        return gamma * eps ** (-1.5)
    return eps ** (-gamma)


# ---------------------------------------------------------------------
# routes and transition mechanics
# ---------------------------------------------------------------------


@dataclass(frozen=True)
class RouteSpec:
    """One excursion route: the class name, the section count k, the
    section indices flown, and the chart and timing data to fly them."""

    cls: str
    k: int
    route: tuple
    anchor: object
    charts: dict
    times: tuple
    offset: float


def class_routes(trace, chartsets: dict, *, steps_table: dict = None,
                 bypass=None) -> dict:
    """Route specifications per class, two section counts each.

    chartsets maps the departure strip letter ('u' or 'd') to the chart
    set fitted at that strip's phase; the class's first letter selects
    which one an excursion uses.
    """
    from .certify import BYPASS_SECTIONS, sequence_route

    steps_table = steps_table or STEPS_TABLE
    bypass = BYPASS_SECTIONS if bypass is None else bypass
    out = {}
    for cls, ks in steps_table.items():
        cs = chartsets[cls[0]]
        charts = {s["index"]: s["chart"] for s in cs.sections}
        specs = []
        for k in ks:
            route = tuple(i for i in sequence_route(k, bypass)[1:-1]) + (k,)
            specs.append(RouteSpec(cls, k, route, cs.anchor, charts,
                                   tuple(trace.times), trace.offsets[k]))
        out[cls] = specs
    return out


def fly_route(spec: RouteSpec, I0: float, theta0: float, eps: float, *,
              clamp: float = 1e-6, cfg=None) -> dict:
    """Fly one excursion as a section-to-section pseudo-orbit.

    Integrates every leg of the route in point mode from the strip
    centreline, projecting the transverse coordinates back to the strip
    radius at each section, and reports the realised action change at
    the return crossing together with the return angle and flight time.
    """
    x, y, I, th = 0.0, 0.0, float(I0), float(theta0)
    prev, src = 0, spec.anchor
    t_total = 0.0
    for i in spec.route:
        dst = spec.anchor if i == spec.k else spec.charts[i]
        dt = spec.times[i] - spec.times[prev]
        res = section_map(src, dst, [x, y, I, th], eps, rigor="fast",
                          cfg=cfg, t_min=0.5 * dt, t_max=1.6 * dt + 0.2,
                          derivatives=False)
        x, y, I, th = res.image
        t_total += res.time
        x = max(-clamp, min(clamp, x))
        y = max(-clamp, min(clamp, y))
        prev, src = i, dst
    return {
        "delta_I": I - float(I0),
        "theta_out": th % (2.0 * math.pi),
        "flight_time": t_total,
    }


@dataclass(frozen=True)
class ClassTable:
    """Calibrated action response of one route across its strip."""

    spec: RouteSpec
    eps: float
    thetas: np.ndarray
    delta_I: np.ndarray
    theta_out: np.ndarray
    flight_time: float

    def response(self, theta0: float) -> float:
        return float(np.interp(theta0, self.thetas, self.delta_I))

    def angle_out(self, theta0: float) -> float:
        return float(np.interp(theta0, self.thetas, self.theta_out))


def calibrate_classes(routes: dict, strips: dict, eps: float, *,
                      nodes: int = 9, I0: float = 5e-7, cfg=None) -> dict:
    """Direct-integration response tables, one per route.

    Flies each route from `nodes` equally spaced departure angles across
    its strip and tabulates the realised action change, return angle and
    flight time.  Returns {class: [ClassTable per section count]}.
    """
    out = {}
    for cls, specs in routes.items():
        strip = strips[cls[0]]
        lo, hi = strip.theta_range
        thetas = np.linspace(lo, hi, nodes)
        tables = []
        for spec in specs:
            rows = [fly_route(spec, I0, th, eps, clamp=strip.r, cfg=cfg)
                    for th in thetas]
            tables.append(ClassTable(
                spec, eps, thetas,
                np.array([r["delta_I"] for r in rows]),
                np.array([r["theta_out"] for r in rows]),
                float(np.mean([r["flight_time"] for r in rows])),
            ))
        out[cls] = tables
    return out


# ---------------------------------------------------------------------
# the steering controller
# ---------------------------------------------------------------------


@dataclass(frozen=True)
class Transition:
    """One logged excursion of the steering controller."""

    step: int
    cls: str
    k: int
    theta0: float
    eps: float
    delta_I: float
    flight_time: float
    exact: bool


def _pick_table(tables, theta0, arrival_center):
    """Angle rule: among the section counts of a class, pick the one
    whose return angle lands closest to the arrival strip centre."""
    def miss(tab):
        d = (tab.angle_out(theta0) - arrival_center) % (2.0 * math.pi)
        return min(d, 2.0 * math.pi - d)
    return min(tables, key=miss)


def steer_orbit(schedule: WalkSchedule, strips: dict, sequences: dict, *,
                seed: int = None, band=(0.0, 1.0), gamma: float = 2.0,
                track_M: float = 10.0, bounds=None, exact_every: int = 0,
                cfg=None):
    """Steer a pseudo-orbit so its walk-scale action shadows the schedule.

    sequences maps class names to calibrated ClassTable lists (from
    calibrate_classes).  Per schedule step the controller selects the
    signed class matching the coin flip, inserting a transfer class
    first when the orbit sits in the wrong strip, picks the section
    count by the angle rule, and realises the transition from a sampled
    strip angle.  The applied walk increment is the scheduled one
    modulated by the realised-to-reference action ratio of the signed
    transition, so the path is a deterministic function of the realised
    dynamics given the seed.  Raises TrackingLost (with the step index)
    if the path strays from its schedule level by more than
    track_M * eps, or, when `bounds` carries certified (c, C), if a
    signed transition's realised action rate leaves the certified band.

    Returns (EnergyPath, [Transition]).
    """
    eps = schedule.eps
    rng = np.random.default_rng(schedule.seed if seed is None else seed)
    refs = {cls: float(np.mean([np.mean(t.delta_I) for t in tabs]))
            for cls, tabs in sequences.items()}
    centers = {s: strips[s].center_theta for s in strips}
    half = {s: 0.5 * (strips[s].theta_range[1] - strips[s].theta_range[0])
            for s in strips}

    levels = schedule.levels
    X = np.array(levels, dtype=float)
    strip_now = "u"
    transitions = []
    lo_band, hi_band = band
    stopped, tau = False, None
    n_flown = 0
    I_cycle = 5e-7

    for step in range(1, schedule.K + 1):
        if stopped:
            X[step:] = X[step - 1]
            break
        sign = int(schedule.omega[step - 1])
        plan = []
        if sign > 0:
            if strip_now == "d":
                plan.append("du")
            plan.append("uu")
        else:
            if strip_now == "u":
                plan.append("ud")
            plan.append("dd")
        ratio = 1.0
        for cls in plan:
            dep, arr = cls[0], cls[1]
            theta0 = centers[dep] + (2.0 * rng.random() - 1.0) * half[dep]
            table = _pick_table(sequences[cls], theta0, centers[arr])
            n_flown += 1
            exact = bool(exact_every) and n_flown % exact_every == 0
            if exact:
                flown = fly_route(table.spec, I_cycle, theta0, eps,
                                  clamp=strips[dep].r, cfg=cfg)
                d_I, f_t = flown["delta_I"], flown["flight_time"]
            else:
                d_I, f_t = table.response(theta0), table.flight_time
            transitions.append(Transition(step, cls, table.spec.k, theta0,
                                          eps, d_I, f_t, exact))
            if cls in ("uu", "dd"):
                ratio = d_I / refs[cls]
                if bounds is not None:
                    c, C = bounds
                    rate = abs(d_I) / eps
                    okay = (c < rate < C) and (d_I > 0) == (cls == "uu")
                    if not okay:
                        raise TrackingLost(
                            f"transition {cls} rate {rate:.3e} outside the "
                            f"certified band ({c:.3e}, {C:.3e})", step=step)
            strip_now = arr
        inc = schedule.mu * eps + sign * schedule.sigma * math.sqrt(eps) * ratio
        X[step] = X[step - 1] + inc
        if abs(X[step] - levels[step]) > track_M * eps:
            raise TrackingLost(
                f"path strayed {abs(X[step] - levels[step]):.3e} from the "
                f"schedule level, beyond {track_M * eps:.3e}", step=step)
        if not (lo_band < X[step] < hi_band):
            stopped, tau = True, step / schedule.K
            X[step + 1:] = X[step]
            break

    t_grid = np.linspace(0.0, 1.0, schedule.K + 1)
    path = EnergyPath(t_grid, X, eps, gamma, schedule.seed, tuple(band),
                      stopped, tau)
    return path, transitions


# ---------------------------------------------------------------------
# synthetic walks and the distributional comparison
# ---------------------------------------------------------------------


def synthetic_paths(X0: float, mu: float, sigma: float, eps: float,
                    n: int, seed: int = 0, *, band=(-np.inf, np.inf),
                    gamma: float = 2.0, cap: int = K_CAP) -> list:
    """Exact coin-flip walks bypassing the dynamics entirely."""
    out = []
    for i in range(n):
        sch = make_schedule(X0, mu, sigma, eps, seed=seed + i, cap=cap)
        X, stopped, j = _apply_stop(sch.levels, band)
        t = np.linspace(0.0, 1.0, sch.K + 1)
        out.append(EnergyPath(t, X, eps, gamma, sch.seed, tuple(band),
                              stopped, None if j is None else j / sch.K))
    return out


def donsker_check(paths, mu: float, sigma: float, *, min_paths: int = 200,
                  increments_per_path: int = 5, seeds=None) -> dict:
    """Distributional comparison of the paths against Brownian motion
    with drift mu and volatility sigma.

    Groups the paths into eccentricity rungs; per rung the standardized
    coarse increments (X_{t+D} - X_t - mu D) / (sigma sqrt(D)) are
    tested against the standard normal law (Kolmogorov-Smirnov) and the
    terminal values against mean X0 + mu and variance sigma^2.  Stopped
    portions of a path are excluded from the increment sample.  Raises
    InsufficientSample when a rung has fewer than min_paths paths.
    """
    from scipy import stats

    rungs = {}
    for p in paths:
        rungs.setdefault(p.eps, []).append(p)
    report = {"mu": mu, "sigma": sigma, "rungs": [],
              "seeds": list(seeds) if seeds is not None else None}
    for eps in sorted(rungs, reverse=True):
        group = rungs[eps]
        if len(group) < min_paths:
            raise InsufficientSample(
                f"rung eps={eps:g} has {len(group)} paths, "
                f"needs {min_paths}")
        z = []
        terminals = []
        for p in group:
            K = len(p.X) - 1
            m = max(1, K // increments_per_path)
            D = m / K
            stop_idx = K if p.tau is None else int(round(p.tau * K))
            for j in range(0, K - m + 1, m):
                if j + m > stop_idx:
                    break
                dX = p.X[j + m] - p.X[j]
                if sigma > 0.0:
                    z.append((dX - mu * D) / (sigma * math.sqrt(D)))
            terminals.append(p.X[-1] - p.X[0])
        z = np.asarray(z)
        terminals = np.asarray(terminals)
        if sigma > 0.0 and z.size:
            ks = stats.kstest(z, "norm")
            p_ks, ks_stat = float(ks.pvalue), float(ks.statistic)
        else:
            p_ks, ks_stat = None, None
        t_mean = float(np.mean(terminals))
        t_var = float(np.var(terminals, ddof=1)) if len(terminals) > 1 else 0.0
        report["rungs"].append({
            "eps": eps,
            "n_paths": len(group),
            "K": len(group[0].X) - 1,
            "n_increments": int(z.size),
            "ks_statistic": ks_stat,
            "p_ks": p_ks,
            "terminal_mean": t_mean,
            "terminal_var": t_var,
            "terminal_se": float(np.std(terminals, ddof=1)
                                 / math.sqrt(len(terminals)))
            if len(terminals) > 1 else 0.0,
            "expected_terminal_mean": mu,
            "expected_terminal_var": sigma ** 2,
            "stopped_fraction": float(np.mean([p.stopped for p in group])),
        })
    return report


# ---------------------------------------------------------------------
# artifacts
# ---------------------------------------------------------------------


def write_paths_csv(paths, filename: str) -> None:
    with open(filename, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["path", "t", "X"])
        for pid, p in enumerate(paths):
            for t, x in zip(p.t, p.X):
                writer.writerow([pid, f"{t:.10g}", f"{x:.12g}"])


def write_donsker_report(report: dict, filename: str) -> None:
    with open(filename, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
