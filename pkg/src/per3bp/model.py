"""Planar elliptic restricted three-body problem in rotating-pulsating
coordinates with the true anomaly as time.

Conventions: the large primary sits at X = mu, the small one at
X = mu - 1; momenta are conjugate to the rotating frame, so the
velocities are X' = P_X + Y, Y' = P_Y - X.  The eccentricity enters only
through the factor 1/(1 + eps cos theta) multiplying the potential, and
is carried as an extra integrated coordinate with eps' = 0 so that
derivatives with respect to it fall out of the same variational jets.

All functions are generic over the scalar kind: plain floats, Interval,
or Jet values can be fed through the same expressions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import NoConvergence, SingularPosition
from .ival import Interval
from .jets import Jet

SINGULARITY_RADIUS = 1e-8


@dataclass(frozen=True)
class ModelParams:
    mu: float = 2.089e-4
    eps: float = 0.0
    eps0: float = 1.6e-5

    def __post_init__(self):
        if not 0.0 < self.mu < 1.0:
            raise ValueError("mu must lie in (0, 1)")
        lo = self.eps.lo if isinstance(self.eps, Interval) else self.eps
        hi = self.eps.hi if isinstance(self.eps, Interval) else self.eps
        if lo < 0.0 or hi > self.eps0:
            raise ValueError("eps must lie in [0, eps0]")


@dataclass(frozen=True)
class ExtState:
    """Extended phase-space point; t is the unwrapped copy of theta."""

    X: float
    Y: float
    P_X: float
    P_Y: float
    theta: float
    t: float = None  # type: ignore[assignment]

    def __post_init__(self):
        if self.t is None:
            object.__setattr__(self, "t", self.theta)

    def as_tuple(self):
        return (self.X, self.Y, self.P_X, self.P_Y, self.theta)


def _sqrt(x):
    if isinstance(x, float):
        return math.sqrt(x)
    return x.sqrt()


def _cos(x):
    if isinstance(x, float):
        return math.cos(x)
    return x.cos()


def _lower(x) -> float:
    if isinstance(x, float):
        return x
    if isinstance(x, Interval):
        return x.lo
    if isinstance(x, Jet):
        return float(x.lo[..., 0].min())
    return float(x)


def _r_squared(X, Y, mu: float):
    d1 = X - mu
    d2 = X - mu + 1.0
    r1s = d1 * d1 + Y * Y
    r2s = d2 * d2 + Y * Y
    return d1, d2, r1s, r2s


def _guard_singular(r1s, r2s):
    if min(_lower(r1s), _lower(r2s)) < SINGULARITY_RADIUS**2:
        raise SingularPosition(
            "state within the singularity guard radius of a primary"
        )


def omega(X, Y, mu: float):
    """Effective potential of the circular problem."""
    _, _, r1s, r2s = _r_squared(X, Y, mu)
    _guard_singular(r1s, r2s)
    return 0.5 * (X * X + Y * Y) + (1.0 - mu) / _sqrt(r1s) + mu / _sqrt(r2s)


def omega_gradient(X, Y, mu: float):
    d1, d2, r1s, r2s = _r_squared(X, Y, mu)
    _guard_singular(r1s, r2s)
    ir1c = 1.0 / (r1s * _sqrt(r1s))
    ir2c = 1.0 / (r2s * _sqrt(r2s))
    o_x = X - (1.0 - mu) * d1 * ir1c - mu * d2 * ir2c
    o_y = Y * (1.0 - ((1.0 - mu) * ir1c + mu * ir2c))
    return o_x, o_y


def hamiltonian(X, Y, P_X, P_Y, theta, mu: float, eps):
    vx = P_X + Y
    vy = P_Y - X
    om = omega(X, Y, mu)
    if isinstance(eps, float) and eps == 0.0:
        return 0.5 * (vx * vx + vy * vy) - om
    return 0.5 * (vx * vx + vy * vy) - om / (1.0 + eps * _cos(theta))


def hamiltonian_state(s: ExtState, p: ModelParams):
    return hamiltonian(s.X, s.Y, s.P_X, s.P_Y, s.theta, p.mu, p.eps)


def vector_field(X, Y, P_X, P_Y, theta, mu: float, eps):
    """Right-hand side of the equations of motion; theta' = 1."""
    o_x, o_y = omega_gradient(X, Y, mu)
    if isinstance(eps, float) and eps == 0.0:
        factor_x, factor_y = o_x, o_y
    else:
        q = 1.0 / (1.0 + eps * _cos(theta))
        factor_x, factor_y = o_x * q, o_y * q
    dX = P_X + Y
    dY = P_Y - X
    dPX = (P_Y - X) + factor_x
    dPY = -(P_X + Y) + factor_y
    return dX, dY, dPX, dPY, 1.0


def vector_field_state(s: ExtState, p: ModelParams):
    return vector_field(s.X, s.Y, s.P_X, s.P_Y, s.theta, p.mu, p.eps)


def libration_point(mu: float, index: str = "L1") -> float:
    """X-coordinate of the collinear equilibrium between the primaries."""
    if index != "L1":
        raise ValueError("only the equilibrium between the primaries is supported")
    if not 0.0 < mu < 1.0:
        raise ValueError("mu must lie in (0, 1)")

    def g(x: float) -> float:
        # Omega_X restricted to Y = 0, mu - 1 < x < mu
        return x + (1.0 - mu) / (mu - x) ** 2 - mu / (x + 1.0 - mu) ** 2

    lo = mu - 1.0 + 1e-9
    hi = mu - 1e-9
    glo, ghi = g(lo), g(hi)
    if not (glo < 0.0 < ghi):
        raise NoConvergence("no sign change for the collinear equilibrium")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        gm = g(mid)
        if gm == 0.0:
            lo = hi = mid
            break
        if gm < 0.0:
            lo = mid
        else:
            hi = mid
    x = 0.5 * (lo + hi)
    for _ in range(8):  # Newton polish
        h = 1e-7
        dg = (g(x + h) - g(x - h)) / (2 * h)
        if dg == 0.0:
            break
        x -= g(x) / dg
    if abs(g(x)) > 1e-13:
        raise NoConvergence(f"equilibrium residual {g(x):.3e} too large")
    return x


def equilibrium_state(mu: float, index: str = "L1") -> ExtState:
    x = libration_point(mu, index)
    return ExtState(x, 0.0, 0.0, x, 0.0)
