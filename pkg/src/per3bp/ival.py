"""Directed-rounding interval arithmetic for scalars and small matrices.

Outward rounding is realized by nudging endpoints to the neighbouring
representable double instead of switching the FPU rounding mode, so values
can be shared freely across worker processes.  Error-free transformations
(2Sum / Dekker product) detect when an endpoint is exact and skip the
nudge, which keeps integer-valued and dyadic arithmetic sharp.

Transcendentals (sin, cos) use quadrant argument reduction against an
enclosure of pi followed by an interval Taylor kernel with an explicit
remainder term.
"""

from __future__ import annotations

import math
from decimal import Decimal

import numpy as np

from .errors import DivisionByZeroInterval, DomainViolation

_INF = math.inf
_SPLITTER = 134217729.0  # 2**27 + 1


def _down(x: float) -> float:
    return math.nextafter(x, -_INF)


def _up(x: float) -> float:
    return math.nextafter(x, _INF)


def _two_sum(a: float, b: float):
    s = a + b
    bp = s - a
    return s, (a - (s - bp)) + (b - bp)


def _two_prod(a: float, b: float):
    p = a * b
    c = _SPLITTER * a
    ah = c - (c - a)
    al = a - ah
    c = _SPLITTER * b
    bh = c - (c - b)
    bl = b - bh
    return p, ((ah * bh - p) + ah * bl + al * bh) + al * bl


def _sum_lo(a: float, b: float) -> float:
    s, e = _two_sum(a, b)
    if e >= 0.0:
        return s
    return _down(s)


def _sum_hi(a: float, b: float) -> float:
    s, e = _two_sum(a, b)
    if e <= 0.0:
        return s
    return _up(s)


def _prod_lo(a: float, b: float) -> float:
    p, e = _two_prod(a, b)
    if e >= 0.0:
        return p
    return _down(p)


def _prod_hi(a: float, b: float) -> float:
    p, e = _two_prod(a, b)
    if e <= 0.0:
        return p
    return _up(p)


def _quot_err_positive(q: float, b: float, a: float):
    """Sign of q*b - a, exploiting that q = fl(a/b) makes p - a exact."""
    p, e = _two_prod(q, b)
    r = (p - a) + e
    if r != r:  # overflow in the splitting; fall back to "unknown"
        return None
    if r == 0.0:
        return 0
    return 1 if (r > 0.0) == (b > 0.0) else -1


def _quot_lo(a: float, b: float) -> float:
    q = a / b
    s = _quot_err_positive(q, b, a)
    if s is None or s > 0:
        return _down(q)
    return q


def _quot_hi(a: float, b: float) -> float:
    q = a / b
    s = _quot_err_positive(q, b, a)
    if s is None or s < 0:
        return _up(q)
    return q


def _sqrt_lo(a: float) -> float:
    if a == 0.0:
        return 0.0
    s = math.sqrt(a)
    p, e = _two_prod(s, s)
    r = (p - a) + e
    if r != r or r > 0.0:
        return _down(s)
    return s


def _sqrt_hi(a: float) -> float:
    if a == 0.0:
        return 0.0
    s = math.sqrt(a)
    p, e = _two_prod(s, s)
    r = (p - a) + e
    if r != r or r < 0.0:
        return _up(s)
    return s


class Interval:
    """Closed interval [lo, hi] with outward-rounded arithmetic."""

    __slots__ = ("lo", "hi")

    def __init__(self, lo, hi=None):
        lo = float(lo)
        hi = lo if hi is None else float(hi)
        if not (lo <= hi):
            raise ValueError(f"invalid interval endpoints [{lo}, {hi}]")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    def __setattr__(self, name, value):
        raise AttributeError("Interval is immutable")

    # -- constructors -------------------------------------------------

    @staticmethod
    def from_decimal_string(s: str) -> "Interval":
        """Tightest interval containing the exact decimal value of s."""
        d = Decimal(s)
        x = float(s)
        dx = Decimal(x)
        if dx == d:
            return Interval(x)
        if dx < d:
            return Interval(x, _up(x))
        return Interval(_down(x), x)

    @staticmethod
    def hull_of(items) -> "Interval":
        lo = _INF
        hi = -_INF
        for it in items:
            iv = it if isinstance(it, Interval) else Interval(it)
            lo = min(lo, iv.lo)
            hi = max(hi, iv.hi)
        return Interval(lo, hi)

    # -- queries ------------------------------------------------------

    def width(self) -> float:
        return _sum_hi(self.hi, -self.lo)

    def mid(self) -> float:
        m = 0.5 * (self.lo + self.hi)
        if not math.isfinite(m):
            m = 0.5 * self.lo + 0.5 * self.hi
        return min(max(m, self.lo), self.hi)

    def mag(self) -> float:
        """sup |x| over the interval."""
        return max(abs(self.lo), abs(self.hi))

    def mig(self) -> float:
        """inf |x| over the interval."""
        if self.lo <= 0.0 <= self.hi:
            return 0.0
        return min(abs(self.lo), abs(self.hi))

    def contains(self, other) -> bool:
        if isinstance(other, Interval):
            return self.lo <= other.lo and other.hi <= self.hi
        return self.lo <= float(other) <= self.hi

    def interior_contains(self, other) -> bool:
        if isinstance(other, Interval):
            return self.lo < other.lo and other.hi < self.hi
        x = float(other)
        return self.lo < x < self.hi

    def __contains__(self, other) -> bool:
        return self.contains(other)

    def intersects(self, other: "Interval") -> bool:
        return self.lo <= other.hi and other.lo <= self.hi

    def intersection(self, other: "Interval"):
        lo = max(self.lo, other.lo)
        hi = min(self.hi, other.hi)
        if lo > hi:
            return None
        return Interval(lo, hi)

    def hull(self, other) -> "Interval":
        o = other if isinstance(other, Interval) else Interval(other)
        return Interval(min(self.lo, o.lo), max(self.hi, o.hi))

    def inflate(self, delta: float) -> "Interval":
        return Interval(_sum_lo(self.lo, -delta), _sum_hi(self.hi, delta))

    def split(self):
        m = self.mid()
        return Interval(self.lo, m), Interval(m, self.hi)

    def is_point(self) -> bool:
        return self.lo == self.hi

    # -- arithmetic ---------------------------------------------------

    def __neg__(self) -> "Interval":
        return Interval(-self.hi, -self.lo)

    def __add__(self, other) -> "Interval":
        if isinstance(other, Interval):
            return Interval(_sum_lo(self.lo, other.lo), _sum_hi(self.hi, other.hi))
        b = float(other)
        return Interval(_sum_lo(self.lo, b), _sum_hi(self.hi, b))

    __radd__ = __add__

    def __sub__(self, other) -> "Interval":
        if isinstance(other, Interval):
            return Interval(_sum_lo(self.lo, -other.hi), _sum_hi(self.hi, -other.lo))
        b = float(other)
        return Interval(_sum_lo(self.lo, -b), _sum_hi(self.hi, -b))

    def __rsub__(self, other) -> "Interval":
        return (-self).__add__(other)

    def __mul__(self, other) -> "Interval":
        if not isinstance(other, Interval):
            b = float(other)
            if b >= 0.0:
                return Interval(_prod_lo(self.lo, b), _prod_hi(self.hi, b))
            return Interval(_prod_lo(self.hi, b), _prod_hi(self.lo, b))
        al, ah, bl, bh = self.lo, self.hi, other.lo, other.hi
        lo = min(_prod_lo(al, bl), _prod_lo(al, bh), _prod_lo(ah, bl), _prod_lo(ah, bh))
        hi = max(_prod_hi(al, bl), _prod_hi(al, bh), _prod_hi(ah, bl), _prod_hi(ah, bh))
        return Interval(lo, hi)

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Interval":
        if not isinstance(other, Interval):
            other = Interval(float(other))
        if other.lo <= 0.0 <= other.hi:
            raise DivisionByZeroInterval(f"divisor {other} contains zero")
        al, ah, bl, bh = self.lo, self.hi, other.lo, other.hi
        lo = min(_quot_lo(al, bl), _quot_lo(al, bh), _quot_lo(ah, bl), _quot_lo(ah, bh))
        hi = max(_quot_hi(al, bl), _quot_hi(al, bh), _quot_hi(ah, bl), _quot_hi(ah, bh))
        return Interval(lo, hi)

    def __rtruediv__(self, other) -> "Interval":
        return Interval(float(other)).__truediv__(self)

    def __pow__(self, n: int) -> "Interval":
        if not isinstance(n, int) or n < 0:
            raise ValueError("only nonnegative integer powers are supported")
        if n == 0:
            return Interval(1.0)
        if n == 1:
            return self
        if n % 2 == 0:
            lo_m, hi_m = self.mig(), self.mag()
            lo = lo_m
            hi = hi_m
            for _ in range(n - 1):
                lo = _prod_lo(lo, lo_m)
                hi = _prod_hi(hi, hi_m)
            return Interval(lo, hi)
        out = self
        for _ in range(n - 1):
            out = out * self
        return out

    def sqrt(self) -> "Interval":
        if self.lo < 0.0:
            raise DomainViolation(f"sqrt of interval reaching below zero: {self}")
        return Interval(_sqrt_lo(self.lo), _sqrt_hi(self.hi))

    def log(self) -> "Interval":
        """Natural log with a 2-ulp outward pad over the libm result.

        Used only for reported constants, never inside certificate
        inequalities; libm log is well within 1 ulp on this platform.
        """
        if self.lo <= 0.0:
            raise DomainViolation(f"log of interval reaching zero: {self}")
        return Interval(_down(_down(math.log(self.lo))), _up(_up(math.log(self.hi))))

    # -- trigonometry -------------------------------------------------

    def sin(self) -> "Interval":
        return _sin_interval(self)

    def cos(self) -> "Interval":
        return _sin_interval(self + _PI_HALF)

    # -- misc ---------------------------------------------------------

    def __repr__(self):
        return f"Interval({self.lo!r}, {self.hi!r})"

    def __eq__(self, other):
        return (
            isinstance(other, Interval) and self.lo == other.lo and self.hi == other.hi
        )

    def __hash__(self):
        return hash((self.lo, self.hi))


# Enclosures of pi and friends.  math.pi falls short of the true value,
# so [pi, nextafter(pi)] is a valid bracket; halving/doubling is exact.
_PI = Interval(math.pi, _up(math.pi))
_PI_HALF = Interval(math.pi / 2, _up(math.pi / 2))
_TWO_PI = Interval(2 * math.pi, _up(2 * math.pi))

PI = _PI
PI_HALF = _PI_HALF
TWO_PI = _TWO_PI

_SIN_TERMS = 9
_COS_TERMS = 9
_SIN_COEF = [Interval(1.0) / Interval(float(math.factorial(2 * k + 1))) for k in range(_SIN_TERMS)]
_COS_COEF = [Interval(1.0) / Interval(float(math.factorial(2 * k))) for k in range(_COS_TERMS)]
_SIN_REM = Interval(1.0) / Interval(float(math.factorial(2 * _SIN_TERMS + 1)))
_COS_REM = Interval(1.0) / Interval(float(math.factorial(2 * _COS_TERMS)))


def _sin_kernel(r: Interval) -> Interval:
    """sin on |r| <= pi/4 + slack via alternating Taylor sum + remainder."""
    r2 = r * r
    acc = Interval(0.0)
    sign = 1.0
    rpow = r
    for k in range(_SIN_TERMS):
        acc = acc + rpow * (_SIN_COEF[k] * sign)
        sign = -sign
        rpow = rpow * r2
    rem = (_SIN_REM * rpow.mag()).hi
    return acc + Interval(-rem, rem)


def _cos_kernel(r: Interval) -> Interval:
    r2 = r * r
    acc = Interval(0.0)
    sign = 1.0
    rpow = Interval(1.0)
    for k in range(_COS_TERMS):
        acc = acc + rpow * (_COS_COEF[k] * sign)
        sign = -sign
        rpow = rpow * r2
    rem = (_COS_REM * rpow.mag()).hi
    return acc + Interval(-rem, rem)


def _sin_point(t: float) -> Interval:
    n = math.floor(t / (math.pi / 2) + 0.5)
    r = Interval(t) - _PI_HALF * float(n)
    m = n % 4
    if m == 0:
        out = _sin_kernel(r)
    elif m == 1:
        out = _cos_kernel(r)
    elif m == 2:
        out = -_sin_kernel(r)
    else:
        out = -_cos_kernel(r)
    return out.intersection(Interval(-1.0, 1.0)) or out


def _sin_interval(x: Interval) -> Interval:
    if x.width() >= _TWO_PI.lo:
        return Interval(-1.0, 1.0)
    out = _sin_point(x.lo).hull(_sin_point(x.hi))
    # critical points pi/2 + k*pi inside x force the extrema in
    k_lo = math.floor((x.lo - math.pi / 2) / math.pi) - 1
    k_hi = math.ceil((x.hi - math.pi / 2) / math.pi) + 1
    for k in range(k_lo, k_hi + 1):
        c = _PI_HALF + _PI * float(k)
        if c.intersects(x):
            out = out.hull(Interval(1.0) if k % 2 == 0 else Interval(-1.0))
    clipped = out.intersection(Interval(-1.0, 1.0))
    return clipped if clipped is not None else out


def as_interval(x) -> Interval:
    return x if isinstance(x, Interval) else Interval(float(x))


# ---------------------------------------------------------------------
# Vectorized endpoint kernels (used by the jet/Taylor machinery).
# These always nudge: one ulp of slack per operation, no exactness test.
# ---------------------------------------------------------------------


def v_down(x):
    return np.nextafter(x, -_INF)


def v_up(x):
    return np.nextafter(x, _INF)


def v_add(alo, ahi, blo, bhi):
    return v_down(alo + blo), v_up(ahi + bhi)


def v_sub(alo, ahi, blo, bhi):
    return v_down(alo - bhi), v_up(ahi - blo)


def v_neg(alo, ahi):
    return -ahi, -alo


def v_mul(alo, ahi, blo, bhi):
    p1 = alo * blo
    p2 = alo * bhi
    p3 = ahi * blo
    p4 = ahi * bhi
    lo = np.minimum(np.minimum(p1, p2), np.minimum(p3, p4))
    hi = np.maximum(np.maximum(p1, p2), np.maximum(p3, p4))
    return v_down(lo), v_up(hi)


def v_scale(alo, ahi, c: float):
    """Multiply by a point scalar."""
    if c >= 0.0:
        return v_down(alo * c), v_up(ahi * c)
    return v_down(ahi * c), v_up(alo * c)


def v_sum(alo, ahi, axis):
    """Directed sum along an axis (loop keeps each partial sum rounded)."""
    alo = np.moveaxis(alo, axis, 0)
    ahi = np.moveaxis(ahi, axis, 0)
    slo = alo[0].copy()
    shi = ahi[0].copy()
    for k in range(1, alo.shape[0]):
        slo = v_down(slo + alo[k])
        shi = v_up(shi + ahi[k])
    return slo, shi


# ---------------------------------------------------------------------
# Interval matrices
# ---------------------------------------------------------------------


class IMat:
    """Dense interval matrix (small; entry access returns Interval)."""

    __slots__ = ("lo", "hi")

    def __init__(self, lo, hi=None):
        lo = np.asarray(lo, dtype=float)
        hi = lo.copy() if hi is None else np.asarray(hi, dtype=float)
        if lo.shape != hi.shape or not np.all(lo <= hi):
            raise ValueError("invalid interval matrix endpoints")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    def __setattr__(self, name, value):
        raise AttributeError("IMat is immutable")

    @staticmethod
    def from_intervals(grid) -> "IMat":
        lo = np.array([[e.lo for e in row] for row in grid], dtype=float)
        hi = np.array([[e.hi for e in row] for row in grid], dtype=float)
        return IMat(lo, hi)

    @property
    def shape(self):
        return self.lo.shape

    def entry(self, i, j) -> Interval:
        return Interval(self.lo[i, j], self.hi[i, j])

    def row(self, i):
        return [Interval(self.lo[i, j], self.hi[i, j]) for j in range(self.shape[1])]

    def mid(self):
        return 0.5 * (self.lo + self.hi)

    def mag(self):
        """Entrywise sup |.| matrix (point)."""
        return np.maximum(np.abs(self.lo), np.abs(self.hi))

    def hull(self, other: "IMat") -> "IMat":
        return IMat(np.minimum(self.lo, other.lo), np.maximum(self.hi, other.hi))

    def __neg__(self):
        return IMat(-self.hi, -self.lo)

    def __add__(self, other: "IMat") -> "IMat":
        return IMat(v_down(self.lo + other.lo), v_up(self.hi + other.hi))

    def __sub__(self, other: "IMat") -> "IMat":
        return IMat(v_down(self.lo - other.hi), v_up(self.hi - other.lo))

    def __matmul__(self, other: "IMat") -> "IMat":
        a_lo = self.lo[:, :, None]
        a_hi = self.hi[:, :, None]
        b_lo = other.lo[None, :, :]
        b_hi = other.hi[None, :, :]
        plo, phi = v_mul(a_lo, a_hi, b_lo, b_hi)
        slo, shi = v_sum(plo, phi, axis=1)
        return IMat(slo, shi)

    def mat_vec(self, vlo, vhi):
        plo, phi = v_mul(self.lo, self.hi, vlo[None, :], vhi[None, :])
        return v_sum(plo, phi, axis=1)

    def __repr__(self):
        return f"IMat(lo={self.lo!r}, hi={self.hi!r})"


def _weighted(weights, n):
    if weights is None:
        return np.ones(n)
    w = np.asarray(weights, dtype=float)
    if w.shape != (n,) or np.any(w <= 0):
        raise ValueError("weights must be positive, one per coordinate")
    return w


def mat_norm(A: IMat, norm: str = "max", weights=None) -> Interval:
    """Enclosure of sup {||M|| : M in A} in the induced operator norm.

    norm="max": induced by the weighted max norm ||v|| = max |v_i| / w_i
    (the norm underlying the cone form); norm="euclidean": rigorous upper
    bound sqrt(||.||_1 * ||.||_inf) on the spectral norm.
    """
    k, n = A.shape
    w_out = _weighted(weights, k)
    w_in = _weighted(weights, n)
    mag = A.mag()
    if norm == "max":
        hi = 0.0
        lo = 0.0
        for i in range(k):
            acc_hi = 0.0
            acc_lo = 0.0
            for j in range(n):
                acc_hi = _sum_hi(acc_hi, _prod_hi(mag[i, j], w_in[j]))
                acc_lo = _sum_lo(acc_lo, _prod_lo(mag[i, j], w_in[j]))
            hi = max(hi, _quot_hi(acc_hi, w_out[i]))
            lo = max(lo, _quot_lo(acc_lo, w_out[i]))
        return Interval(min(lo, hi), hi)
    if norm == "euclidean":
        one = 0.0
        inf_ = 0.0
        for j in range(n):
            acc = 0.0
            for i in range(k):
                acc = _sum_hi(acc, mag[i, j])
            one = max(one, acc)
        for i in range(k):
            acc = 0.0
            for j in range(n):
                acc = _sum_hi(acc, mag[i, j])
            inf_ = max(inf_, acc)
        hi = _sqrt_hi(_prod_hi(one, inf_))
        return Interval(0.0, hi)
    raise ValueError(f"unknown norm {norm!r}")


def mat_m(A: IMat, norm: str = "max", weights=None) -> Interval:
    """Enclosure with lo <= inf {m(M) : M in A}, m(M) = 1/||M^{-1}||.

    Returns [0, .] whenever some member of A may be singular.
    """
    k, n = A.shape
    if k != n:
        raise ValueError("mat_m requires a square matrix")
    hi = mat_norm(A, norm=norm, weights=weights).hi
    mid = A.mid()
    try:
        R = np.linalg.inv(mid)
    except np.linalg.LinAlgError:
        return Interval(0.0, hi)
    if not np.all(np.isfinite(R)):
        return Interval(0.0, hi)
    E = IMat(np.eye(n)) - IMat(R) @ A
    kappa = mat_norm(E, norm=norm, weights=weights).hi
    if kappa >= 1.0:
        return Interval(0.0, hi)
    nR = mat_norm(IMat(R), norm=norm, weights=weights).hi
    if nR == 0.0:
        return Interval(0.0, hi)
    lo = _quot_lo(_sum_lo(1.0, -kappa), nR)
    lo = max(lo, 0.0)
    return Interval(lo, max(hi, lo))
