"""Windows (h-sets), cone families, and their validation lemmas.

A window is a product of an exit ball in the expanding coordinate x and
an entry block in the remaining coordinates (y, I, theta), expressed in
the local coordinates of a chart.  Two checks drive the certification:

* check_alignment validates the covering relation for one-dimensional
  exit sets: the image of the whole window stays strictly inside the
  target's entry block while the two exit faces are thrown strictly past
  the target's exit interval, on opposite sides.

* propagate_cone turns an interval Jacobian (plus the mixed second
  derivative with the perturbation parameter) into the smallest cone
  slopes that the image of a cone is guaranteed to satisfy.  Chaining it
  along a sequence and returning below the starting slopes certifies the
  cone condition for the whole composition.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import EnclosureTooWide, ExpansionLost
from .ival import Interval

__all__ = [
    "Window",
    "ConeParams",
    "AlignmentResult",
    "check_alignment",
    "propagate_cone",
    "cone_sampling_oracle",
    "cone_value",
]


@dataclass(frozen=True)
class Window:
    """Product window in chart-local coordinates.

    The x and y balls are centered at the chart origin; the I and theta
    blocks are explicit intervals (theta within a single 2 pi chart).
    """

    chart: object
    x_radius: float
    y_radius: float
    I_range: tuple
    theta_range: tuple

    def __post_init__(self):
        if not (self.x_radius > 0.0 and self.y_radius > 0.0):
            raise ValueError("window radii must be positive")
        if not self.I_range[0] < self.I_range[1]:
            raise ValueError("empty action range")
        if not self.theta_range[0] < self.theta_range[1]:
            raise ValueError("empty angle range")

    def domain(self):
        """The window as a box of 4 intervals (x, y, I, theta)."""
        return [
            Interval(-self.x_radius, self.x_radius),
            Interval(-self.y_radius, self.y_radius),
            Interval(*self.I_range),
            Interval(*self.theta_range),
        ]

    def entry_contains(self, y: Interval, i: Interval, th: Interval):
        """Strict-interior margins of (y, I, theta) in the entry block;
        any negative margin means the containment fails or is undecided."""
        return (
            min(self.y_radius - y.hi, y.lo - (-self.y_radius)),
            min(self.I_range[1] - i.hi, i.lo - self.I_range[0]),
            min(self.theta_range[1] - th.hi, th.lo - self.theta_range[0]),
        )


@dataclass(frozen=True)
class ConeParams:
    """Slopes of the cone Q_a^eps: expansion of x dominates y, theta
    directly and I at scale eps."""

    a_y: float
    a_I: float
    a_theta: float

    def __post_init__(self):
        if not (self.a_y > 0.0 and self.a_I > 0.0 and self.a_theta > 0.0):
            raise ValueError("cone slopes must be positive")

    def dominates(self, other: "ConeParams") -> bool:
        """True when a cone with these slopes contains the other cone,
        i.e. the chain returned into the starting cone."""
        return (
            other.a_y <= self.a_y
            and other.a_I <= self.a_I
            and other.a_theta <= self.a_theta
        )


def cone_value(a: ConeParams, dz, eps: float) -> float:
    """Q_a^eps evaluated on a difference vector (dx, dy, dI, dtheta)."""
    dx, dy, di, dth = dz
    s = max(abs(dy) / a.a_y, abs(di) / (eps * a.a_I), abs(dth) / a.a_theta)
    return dx * dx - s * s


@dataclass(frozen=True)
class AlignmentResult:
    aligned: bool
    orientation: int
    x_margin: float
    y_margin: float
    I_margin: float
    theta_margin: float
    clause: str = ""

    @property
    def stable_margin(self) -> float:
        return min(self.y_margin, self.I_margin, self.theta_margin)


def _split_box(box, order=(2, 3, 0, 1)):
    """All bisections of the widest eligible coordinate, action and
    angle first; sharper interval bounds come from smaller sets."""
    widths = [b.width() for b in box]
    k = max(order, key=lambda i: widths[i])
    lo, hi = box[k].split()
    left = list(box)
    right = list(box)
    left[k] = lo
    right[k] = hi
    return left, right


def _entry_margins(f, box, eps, M: Window, depth: int):
    """Minimal strict-interior margins of the stable projections of
    f(box) over an adaptive subdivision of box."""
    res = f(box, eps)
    m = M.entry_contains(res.image[1], res.image[2], res.image[3])
    if min(m) > 0.0 or depth == 0:
        return m
    left, right = _split_box(box)
    ml = _entry_margins(f, left, eps, M, depth - 1)
    mr = _entry_margins(f, right, eps, M, depth - 1)
    return tuple(min(a, b) for a, b in zip(ml, mr))


def _face_range(f, box, eps, depth: int) -> Interval:
    """Hull of the x-projection of f over a face box, subdividing the
    stable coordinates when the plain enclosure is too coarse."""
    res = f(box, eps)
    out = res.image[0]
    if depth == 0:
        return out
    # only subdivide when it can still change the verdict: the face box
    # is thin in x, so split (I, theta) then y
    left, right = _split_box(box, order=(2, 3, 1))
    rl = _face_range(f, left, eps, depth - 1)
    rr = _face_range(f, right, eps, depth - 1)
    return rl.hull(rr)


def check_alignment(
    N: Window,
    M: Window,
    f,
    eps,
    depth: int = 12,
    face_depth: int = 4,
) -> AlignmentResult:
    """Covering relation N => M under the enclosed map f.

    f is called as f(box, eps) and must return an object with an
    `image` attribute of 4 intervals in M's local coordinates, valid for
    every point of the box and every eps of the interval.  The verdict
    is true when the stable projections of f(N) sit strictly inside M's
    entry block and the two exit faces of N are mapped strictly beyond
    M's exit interval on opposite sides.  Raises EnclosureTooWide when
    subdivision down to `depth` still leaves a clause undecided.
    """
    eps = eps if isinstance(eps, Interval) else Interval(float(eps))
    box = N.domain()
    y_m, i_m, th_m = _entry_margins(f, box, eps, M, depth)
    stable_ok = min(y_m, i_m, th_m) > 0.0

    minus = list(box)
    minus[0] = Interval(-N.x_radius)
    plus = list(box)
    plus[0] = Interval(N.x_radius)
    r_minus = _face_range(f, minus, eps, face_depth)
    r_plus = _face_range(f, plus, eps, face_depth)

    rm = M.x_radius
    if r_minus.hi < -rm and r_plus.lo > rm:
        orientation = 1
        x_margin = min(-rm - r_minus.hi, r_plus.lo - rm)
    elif r_minus.lo > rm and r_plus.hi < -rm:
        orientation = -1
        x_margin = min(r_minus.lo - rm, -rm - r_plus.hi)
    else:
        # distinguish a definite failure from an undecidable enclosure:
        # if either face range meets the closed target interval the map
        # genuinely fails the lemma; otherwise the two faces landed on
        # the same side, which no refinement of a continuous map can fix
        target = Interval(-rm, rm)
        if r_minus.intersects(target) and (
            r_minus.lo < -rm or r_minus.hi > rm
        ):
            raise EnclosureTooWide(
                f"exit-face image {r_minus} straddles the target exit ball"
            )
        if r_plus.intersects(target) and (r_plus.lo < -rm or r_plus.hi > rm):
            raise EnclosureTooWide(
                f"exit-face image {r_plus} straddles the target exit ball"
            )
        return AlignmentResult(
            False, 0, -math.inf, y_m, i_m, th_m, clause="exit faces"
        )

    if not stable_ok:
        clause = (
            "stable y" if y_m <= 0 else ("action block" if i_m <= 0 else "angle block")
        )
        return AlignmentResult(False, orientation, x_margin, y_m, i_m, th_m, clause)
    return AlignmentResult(True, orientation, x_margin, y_m, i_m, th_m)


def _mag(iv: Interval) -> float:
    return iv.mag()


def _mig(iv: Interval) -> float:
    return iv.mig()


def propagate_cone(
    a_in: ConeParams,
    D,
    Dmix,
    eps0: float,
    safety: float = 1.0 + 1e-6,
) -> ConeParams:
    """Smallest output cone slopes certified by the interval derivative.

    D is the 4x4 interval Jacobian of the step over (x, y, I, theta) and
    Dmix the 4x4 interval mixed second derivative with eps, both valid
    over the full window and eps range [0, eps0].  The denominator is
    the guaranteed expansion of x minus the worst coupling from inside
    the input cone; each output slope is the corresponding quotient of
    the displayed inequalities, times the safety factor that keeps the
    strict inequality machine-checkable.
    """

    def d(i, j):
        return D.entry(i, j) if hasattr(D, "entry") else D[i][j]

    def dm(i, j):
        return Dmix.entry(i, j) if hasattr(Dmix, "entry") else Dmix[i][j]

    ay, aI, ath = a_in.a_y, a_in.a_I, a_in.a_theta
    den = (
        _mig(d(0, 0))
        - _mag(d(0, 1)) * ay
        - eps0 * _mag(d(0, 2)) * aI
        - _mag(d(0, 3)) * ath
    )
    if not den > 0.0:
        raise ExpansionLost(
            f"cone denominator {den:.6e} is not certified positive"
        )

    def quotient(k):
        num = (
            _mag(d(k, 0))
            + _mag(d(k, 1)) * ay
            + eps0 * _mag(d(k, 2)) * aI
            + _mag(d(k, 3)) * ath
        )
        return num / den

    b_y = quotient(1) * safety
    b_th = quotient(3) * safety
    num_i = (
        _mag(dm(2, 0))
        + _mag(dm(1, 1)) * ay
        + (1.0 + eps0 * _mag(dm(2, 2))) * aI
        + _mag(dm(2, 3)) * ath
    )
    b_i = num_i / den * safety
    return ConeParams(b_y, b_i, b_th)


def cone_sampling_oracle(
    f,
    a: ConeParams,
    b: ConeParams,
    eps: float,
    trials: int,
    domain=None,
    scale: float = 1e-6,
    seed: int = 0,
):
    """Empirical check of cone propagation on a point map.

    Draws pairs (z, z') with Q_a^eps(z - z') > 0 inside the domain and
    reports the fraction whose images satisfy Q_b^eps(f(z) - f(z')) > 0.
    A certified propagate_cone result must score exactly 1.0.
    """
    rng = np.random.default_rng(seed)
    if domain is None:
        domain = [(-1.0, 1.0), (-1.0, 1.0), (0.0, 1.0), (0.0, 1.0)]
    good = 0
    total = 0
    while total < trials:
        z = np.array([rng.uniform(lo, hi) for lo, hi in domain])
        dx = rng.uniform(0.1, 1.0) * scale * rng.choice((-1.0, 1.0))
        shrink = rng.uniform(0.0, 0.999)
        dz = np.array(
            [
                dx,
                rng.uniform(-1.0, 1.0) * a.a_y * abs(dx) * shrink,
                rng.uniform(-1.0, 1.0) * eps * a.a_I * abs(dx) * shrink,
                rng.uniform(-1.0, 1.0) * a.a_theta * abs(dx) * shrink,
            ]
        )
        zp = z + dz
        if any(zp[i] < domain[i][0] or zp[i] > domain[i][1] for i in range(4)):
            continue
        if not cone_value(a, dz, eps) > 0.0:
            continue
        total += 1
        df = np.array(f(zp, eps)) - np.array(f(z, eps))
        if cone_value(b, df, eps) > 0.0:
            good += 1
    return good / trials
