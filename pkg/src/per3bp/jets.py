"""Jet arithmetic: values, first derivatives along seed directions, and
(optionally) the second derivatives mixed with one designated direction.

A jet carries, for a scalar quantity q(u) of the seed parameters u:

    slot 0          q
    slots 1..G      dq/du_j
    slots G+1..2G   d^2 q / (du_e du_j)   (only when spec.mix is set)

where u_e is the designated "mix" direction (here: the eccentricity
parameter).  Restricting second order to one row keeps the cost linear in
G while still delivering the mixed derivatives the cone-propagation and
energy-drift checks consume.

Endpoints are stored as numpy arrays of shape (..., W); leading axes are
broadcastable batch axes (the Taylor convolution stacks series
coefficients there).  In interval mode every operation rounds outward;
in point mode lo and hi alias the same array and plain float arithmetic
is used, which makes the identical code path serve as the fast,
non-rigorous integrator.
"""

from __future__ import annotations

import math

import numpy as np

from .ival import Interval, v_add, v_down, v_mul, v_sum, v_up


class JetSpec:
    """Shape/mode descriptor shared by all jets of one computation."""

    __slots__ = ("ngrad", "eidx", "mix", "interval", "width")

    def __init__(self, ngrad: int, eidx=None, mix: bool = False, interval: bool = True):
        if mix and eidx is None:
            raise ValueError("mix jets need a designated direction index")
        self.ngrad = ngrad
        self.eidx = eidx
        self.mix = mix
        self.interval = interval
        self.width = 1 + ngrad + (ngrad if mix else 0)

    def __eq__(self, other):
        return (
            isinstance(other, JetSpec)
            and self.ngrad == other.ngrad
            and self.eidx == other.eidx
            and self.mix == other.mix
            and self.interval == other.interval
        )

    def __repr__(self):
        return (
            f"JetSpec(ngrad={self.ngrad}, eidx={self.eidx}, "
            f"mix={self.mix}, interval={self.interval})"
        )


class Jet:
    __slots__ = ("lo", "hi", "spec")

    def __init__(self, spec: JetSpec, lo, hi=None):
        self.spec = spec
        self.lo = np.asarray(lo, dtype=float)
        self.hi = self.lo if hi is None or hi is lo else np.asarray(hi, dtype=float)
        if not spec.interval:
            self.hi = self.lo

    # -- constructors --------------------------------------------------

    @staticmethod
    def const(spec: JetSpec, value) -> "Jet":
        lo = np.zeros(spec.width)
        hi = np.zeros(spec.width)
        if isinstance(value, Interval):
            lo[0] = value.lo
            hi[0] = value.hi
        else:
            lo[0] = hi[0] = float(value)
        if not spec.interval and lo[0] != hi[0]:
            raise ValueError("point-mode jet cannot hold an interval value")
        return Jet(spec, lo, hi if spec.interval else None)

    @staticmethod
    def seed(spec: JetSpec, value, index: int) -> "Jet":
        """A jet for the seed variable u_index itself."""
        j = Jet.const(spec, value)
        j.lo[1 + index] = 1.0
        if spec.interval:
            j.hi[1 + index] = 1.0
        return j

    def copy(self) -> "Jet":
        if self.spec.interval:
            return Jet(self.spec, self.lo.copy(), self.hi.copy())
        return Jet(self.spec, self.lo.copy())

    # -- slot views ----------------------------------------------------

    def val(self) -> Interval:
        lo = self.lo[..., 0]
        hi = self.hi[..., 0]
        if lo.ndim != 0:
            raise ValueError("val() needs an unbatched jet")
        return Interval(float(lo), float(hi))

    def grad(self, j: int) -> Interval:
        return Interval(float(self.lo[..., 1 + j]), float(self.hi[..., 1 + j]))

    def mix(self, j: int) -> Interval:
        if not self.spec.mix:
            raise ValueError("jet carries no mixed slots")
        g = self.spec.ngrad
        return Interval(float(self.lo[..., 1 + g + j]), float(self.hi[..., 1 + g + j]))

    # -- structural ops ------------------------------------------------

    def hull(self, other: "Jet") -> "Jet":
        return Jet(
            self.spec,
            np.minimum(self.lo, other.lo),
            np.maximum(self.hi, other.hi),
        )

    def contains(self, other: "Jet") -> bool:
        return bool(np.all(self.lo <= other.lo) and np.all(other.hi <= self.hi))

    def widths(self):
        return self.hi - self.lo

    def inflate(self, delta: float) -> "Jet":
        if not self.spec.interval:
            raise ValueError("cannot inflate a point jet")
        return Jet(self.spec, v_down(self.lo - delta), v_up(self.hi + delta))

    # -- ring operations -----------------------------------------------

    def __neg__(self) -> "Jet":
        if self.spec.interval:
            return Jet(self.spec, -self.hi, -self.lo)
        return Jet(self.spec, -self.lo)

    def __add__(self, other) -> "Jet":
        if isinstance(other, Jet):
            if self.spec.interval:
                lo, hi = v_add(self.lo, self.hi, other.lo, other.hi)
                return Jet(self.spec, lo, hi)
            return Jet(self.spec, self.lo + other.lo)
        return self._add_scalar(other)

    __radd__ = __add__

    def __sub__(self, other) -> "Jet":
        if isinstance(other, Jet):
            return self.__add__(-other)
        return self._add_scalar(-other if isinstance(other, Interval) else -float(other))

    def __rsub__(self, other) -> "Jet":
        return (-self).__add__(other)

    def _add_scalar(self, s) -> "Jet":
        out = self.copy()
        if isinstance(s, Interval):
            if not self.spec.interval:
                raise ValueError("point-mode jet cannot absorb an interval")
            out.lo[..., 0] = v_down(out.lo[..., 0] + s.lo)
            out.hi[..., 0] = v_up(out.hi[..., 0] + s.hi)
        else:
            s = float(s)
            if self.spec.interval:
                out.lo[..., 0] = v_down(out.lo[..., 0] + s)
                out.hi[..., 0] = v_up(out.hi[..., 0] + s)
            else:
                out.lo[..., 0] = out.lo[..., 0] + s
        return out

    def __mul__(self, other) -> "Jet":
        if isinstance(other, Jet):
            return jet_mul(self, other)
        return self._scale(other)

    __rmul__ = __mul__

    def _scale(self, s) -> "Jet":
        if isinstance(s, Interval):
            if not self.spec.interval:
                raise ValueError("point-mode jet cannot absorb an interval")
            lo, hi = v_mul(self.lo, self.hi, np.float64(s.lo), np.float64(s.hi))
            return Jet(self.spec, lo, hi)
        s = float(s)
        if not self.spec.interval:
            return Jet(self.spec, self.lo * s)
        if s >= 0:
            return Jet(self.spec, v_down(self.lo * s), v_up(self.hi * s))
        return Jet(self.spec, v_down(self.hi * s), v_up(self.lo * s))

    def __truediv__(self, other) -> "Jet":
        if isinstance(other, Jet):
            return jet_mul(self, jet_reciprocal(other))
        if isinstance(other, Interval):
            return self._scale(Interval(1.0) / other)
        return self._scale(1.0 / float(other))

    def __rtruediv__(self, other) -> "Jet":
        return jet_reciprocal(self)._scale(other)

    def sqrt(self) -> "Jet":
        return jet_sqrt(self)

    def sin(self) -> "Jet":
        if not self.spec.interval:
            s, c = math.sin(float(self.lo[0])), math.cos(float(self.lo[0]))
            return _point_unary(self, s, c, -s)
        return _jet_unary(self, lambda v: v.sin(), lambda v: v.cos(), lambda v: -v.sin())

    def cos(self) -> "Jet":
        if not self.spec.interval:
            s, c = math.sin(float(self.lo[0])), math.cos(float(self.lo[0]))
            return _point_unary(self, c, -s, -c)
        return _jet_unary(self, lambda v: v.cos(), lambda v: -v.sin(), lambda v: -v.cos())

    def __repr__(self):
        return f"Jet(lo={self.lo!r}, hi={self.hi!r})"


def _mul_arrays(spec, alo, ahi, blo, bhi):
    if spec.interval:
        return v_mul(alo, ahi, blo, bhi)
    p = alo * blo
    return p, p


def _add_arrays(spec, alo, ahi, blo, bhi):
    if spec.interval:
        return v_add(alo, ahi, blo, bhi)
    s = alo + blo
    return s, s


def jet_mul(a: Jet, b: Jet) -> Jet:
    """Product in the truncated ring: value, gradient, and mixed row."""
    spec = a.spec
    g = spec.ngrad
    a0l = a.lo[..., :1]
    a0h = a.hi[..., :1]
    b0l = b.lo[..., :1]
    b0h = b.hi[..., :1]
    # a0 * (b0, bg, bm) covers the value row and half of every product rule
    p1l, p1h = _mul_arrays(spec, a0l, a0h, b.lo, b.hi)
    # b0 * (ag, am)
    p2l, p2h = _mul_arrays(spec, b0l, b0h, a.lo[..., 1:], a.hi[..., 1:])
    outl = p1l.copy()
    outh = p1h.copy()
    outl[..., 1:], outh[..., 1:] = _add_arrays(
        spec, p1l[..., 1:], p1h[..., 1:], p2l, p2h
    )
    if spec.mix:
        e = 1 + spec.eidx
        ael = a.lo[..., e : e + 1]
        aeh = a.hi[..., e : e + 1]
        bel = b.lo[..., e : e + 1]
        beh = b.hi[..., e : e + 1]
        c1l, c1h = _mul_arrays(spec, ael, aeh, b.lo[..., 1 : 1 + g], b.hi[..., 1 : 1 + g])
        c2l, c2h = _mul_arrays(spec, bel, beh, a.lo[..., 1 : 1 + g], a.hi[..., 1 : 1 + g])
        cl, ch = _add_arrays(spec, c1l, c1h, c2l, c2h)
        outl[..., 1 + g :], outh[..., 1 + g :] = _add_arrays(
            spec, outl[..., 1 + g :], outh[..., 1 + g :], cl, ch
        )
    return Jet(spec, outl, outh if spec.interval else None)


def _scalar_interval(spec, lo, hi):
    if spec.interval:
        return Interval(float(lo), float(hi))
    v = float(lo)
    return Interval(v, v)


def jet_reciprocal(b: Jet) -> Jet:
    """1/b for an unbatched jet."""
    spec = b.spec
    if not spec.interval:
        t = float(b.lo[0])
        return _point_unary(b, 1.0 / t, -1.0 / (t * t), 2.0 / (t * t * t))
    v = _scalar_interval(spec, b.lo[0], b.hi[0])
    f0 = Interval(1.0) / v
    f1 = -(Interval(1.0) / (v * v))
    f2 = Interval(2.0) / (v * v * v)
    out = Jet.const(spec, f0 if spec.interval else f0.lo)
    _apply_unary(out, b, v, f0, f1, f2)
    return out


def jet_sqr(a: Jet) -> Jet:
    """Square with a dependency-tight value row (never dips below zero)."""
    out = jet_mul(a, a)
    if not a.spec.interval:
        return out
    lo = a.lo[..., 0]
    hi = a.hi[..., 0]
    mig = np.where(lo > 0.0, lo, np.where(hi < 0.0, -hi, 0.0))
    mag = np.maximum(np.abs(lo), np.abs(hi))
    out.lo[..., 0] = np.maximum(v_mul(mig, mig, mig, mig)[0], 0.0)
    out.hi[..., 0] = v_mul(mag, mag, mag, mag)[1]
    return out


def jet_sqrt(a: Jet) -> Jet:
    spec = a.spec
    if not spec.interval:
        t = float(a.lo[0])
        if t <= 0.0:
            raise ValueError("jet sqrt at zero")
        s = math.sqrt(t)
        return _point_unary(a, s, 0.5 / s, -0.25 / (s * t))
    v = _scalar_interval(spec, a.lo[0], a.hi[0])
    f0 = v.sqrt()
    f1 = Interval(0.5) / f0 if f0.mig() > 0 else None
    if f1 is None:
        raise ValueError("jet sqrt at zero")
    f2 = Interval(-0.25) / (f0 * v)
    out = Jet.const(spec, f0 if spec.interval else f0.lo)
    _apply_unary(out, a, v, f0, f1, f2)
    return out


def _point_unary(a: Jet, f0: float, f1: float, f2: float) -> Jet:
    """Point-mode unary composition from precomputed float derivatives,
    skipping the outward-rounded elementary-function enclosures."""
    out = Jet.const(a.spec, f0)
    _apply_unary(out, a, None, Interval(f0), Interval(f1), Interval(f2))
    return out


def _jet_unary(a: Jet, f, df, d2f) -> Jet:
    spec = a.spec
    v = _scalar_interval(spec, a.lo[0], a.hi[0])
    f0 = f(v)
    f1 = df(v)
    f2 = d2f(v)
    out = Jet.const(spec, f0 if spec.interval else f0.lo)
    _apply_unary(out, a, v, f0, f1, f2)
    return out


def _apply_unary(out: Jet, a: Jet, v: Interval, f0: Interval, f1: Interval, f2):
    """Fill gradient/mix slots of out = f(a) given enclosures of f', f''."""
    spec = a.spec
    g = spec.ngrad
    gl, gh = _mul_scalar(spec, a.lo[1 : 1 + g], a.hi[1 : 1 + g], f1)
    out.lo[1 : 1 + g] = gl
    if spec.interval:
        out.hi[1 : 1 + g] = gh
    if spec.mix:
        e = 1 + spec.eidx
        ael, aeh = a.lo[e], a.hi[e]
        # f'(v) * am_j + f''(v) * a_e * ag_j
        m1l, m1h = _mul_scalar(spec, a.lo[1 + g :], a.hi[1 + g :], f1)
        cel, ceh = _mul_arrays(
            spec,
            np.asarray(ael),
            np.asarray(aeh),
            a.lo[1 : 1 + g],
            a.hi[1 : 1 + g],
        )
        m2l, m2h = _mul_scalar(spec, cel, ceh, f2)
        ml, mh = _add_arrays(spec, m1l, m1h, m2l, m2h)
        out.lo[1 + g :] = ml
        if spec.interval:
            out.hi[1 + g :] = mh


def _mul_scalar(spec, alo, ahi, s: Interval):
    if spec.interval:
        return v_mul(alo, ahi, np.float64(s.lo), np.float64(s.hi))
    p = alo * s.lo
    return p, p


def jet_div(a: Jet, b: Jet) -> Jet:
    return a / b


def stack_jets(jets) -> Jet:
    spec = jets[0].spec
    lo = np.stack([j.lo for j in jets])
    if spec.interval:
        return Jet(spec, lo, np.stack([j.hi for j in jets]))
    return Jet(spec, lo)


def conv_reduce(a: Jet) -> Jet:
    """Sum a batched jet along its leading axis with outward rounding."""
    spec = a.spec
    if spec.interval:
        lo, hi = v_sum(a.lo, a.hi, axis=0)
        return Jet(spec, lo, hi)
    return Jet(spec, a.lo.sum(axis=0))
