"""Taylor-series recursion in time for the equations of motion, generic
over the jet mode (interval or point, with or without derivative slots).

The flow's Taylor coefficients are generated order by order from the
algebraic structure of the right-hand side: squared distances and their
-3/2 powers obey standard power-series recurrences, the true-anomaly
factor 1/(1 + eps cos theta) a division recurrence, and sin/cos of theta
the rotation recurrence.  Every coefficient is a jet, so the same sweep
yields the variational (and mixed second-order) coefficients.

State variable order: X, Y, P_X, P_Y, theta, eps (eps' = 0).
"""

from __future__ import annotations

import numpy as np

from .errors import SingularPosition
from .ival import Interval, v_add, v_mul, v_sum
from .jets import Jet, JetSpec, jet_mul, jet_reciprocal, jet_sqr
from .model import SINGULARITY_RADIUS

NVARS = 6
IX, IY, IPX, IPY, ITH, IEPS = range(6)


class Series:
    """Taylor coefficients of one scalar quantity; each row is a jet."""

    __slots__ = ("spec", "lo", "hi", "n")

    def __init__(self, spec: JetSpec, length: int):
        self.spec = spec
        self.lo = np.zeros((length, spec.width))
        self.hi = self.lo if not spec.interval else np.zeros((length, spec.width))
        self.n = 0

    def set(self, k: int, jet: Jet):
        self.lo[k] = jet.lo
        if self.spec.interval:
            self.hi[k] = jet.hi
        self.n = max(self.n, k + 1)

    def coeff(self, k: int) -> Jet:
        return Jet(self.spec, self.lo[k], self.hi[k])

    def batch(self, start: int, stop: int, reverse: bool = False) -> Jet:
        sl = slice(stop - 1, start - 1 if start > 0 else None, -1) if reverse else slice(start, stop)
        return Jet(self.spec, self.lo[sl], self.hi[sl])


def conv(a: Series, b: Series, k: int) -> Jet:
    """sum_{j=0..k} a_j * b_{k-j}"""
    prod = jet_mul(a.batch(0, k + 1), b.batch(0, k + 1, reverse=True))
    return _reduce(prod)


def conv_tail(a: Series, b: Series, k: int) -> Jet:
    """sum_{j=1..k} a_j * b_{k-j} (used by division-type recurrences)."""
    prod = jet_mul(a.batch(1, k + 1), b.batch(0, k, reverse=True))
    return _reduce(prod)


def _reduce(batched: Jet) -> Jet:
    spec = batched.spec
    if spec.interval:
        lo, hi = v_sum(batched.lo, batched.hi, axis=0)
        return Jet(spec, lo, hi)
    return Jet(spec, batched.lo.sum(axis=0))


class _PowerWeights:
    """Per-order weight vectors for the w = u^alpha recurrence."""

    def __init__(self, alpha: float, max_order: int):
        self.lo = []
        self.hi = []
        for k in range(max_order + 2):
            if k == 0:
                self.lo.append(None)
                self.hi.append(None)
                continue
            # (alpha*j - (k - j)) / k for j = 1..k; numerators are exact
            j = np.arange(1, k + 1, dtype=float)
            num = alpha * j - (k - j)
            q = num / k
            self.lo.append(np.nextafter(q, -np.inf)[:, None])
            self.hi.append(np.nextafter(q, np.inf)[:, None])


def power_coeff(u: Series, w: Series, wt: _PowerWeights, recip_u0: Jet, k: int) -> Jet:
    """Order-k coefficient of w = u^alpha given orders < k."""
    spec = u.spec
    prod = jet_mul(u.batch(1, k + 1), w.batch(0, k, reverse=True))
    if spec.interval:
        slo, shi = v_mul(prod.lo, prod.hi, wt.lo[k], wt.hi[k])
        s = _reduce(Jet(spec, slo, shi))
    else:
        s = _reduce(Jet(spec, prod.lo * ((wt.lo[k] + wt.hi[k]) * 0.5)))
    return jet_mul(s, recip_u0)


class FlowSeries:
    """All series of one Taylor step, seeded at jet-valued initial data."""

    def __init__(self, spec: JetSpec, mu: float, max_order: int):
        self.spec = spec
        self.mu = mu
        self.max_order = max_order
        L = max_order + 2
        mk = lambda: Series(spec, L)
        self.state = [mk() for _ in range(NVARS)]
        self.d1 = mk()
        self.d2 = mk()
        self.r1s = mk()
        self.r2s = mk()
        self.ir1c = mk()
        self.ir2c = mk()
        self.ox = mk()
        self.oy = mk()
        self.sin = mk()
        self.cos = mk()
        self.den = mk()
        self.q = mk()
        self.oxq = mk()
        self.oyq = mk()
        self._oyf_series = mk()
        self._wt = _PowerWeights(-1.5, max_order)
        self._recip_r1s0 = None
        self._recip_r2s0 = None
        self._recip_den0 = None
        self._inv_kp1 = [
            Interval(1.0) / Interval(float(k + 1)) for k in range(max_order + 2)
        ]
        self.order = -1

    def seed(self, jets):
        """jets: sequence of 6 jets (X, Y, P_X, P_Y, theta, eps)."""
        for i in range(NVARS):
            self.state[i].set(0, jets[i])
        self._aux_order(0)

    def extend_to(self, order: int):
        while self.order < order:
            self._step_order(self.order + 1)

    def _step_order(self, k: int):
        # state coefficients of order k+1 from aux of order k
        st = self.state
        inv = self._inv_kp1[k] if self.spec.interval else 1.0 / (k + 1)
        xk = st[IX].coeff(k)
        yk = st[IY].coeff(k)
        pxk = st[IPX].coeff(k)
        pyk = st[IPY].coeff(k)
        vx = pxk + yk
        vy = pyk - xk
        st[IX].set(k + 1, vx * inv)
        st[IY].set(k + 1, vy * inv)
        st[IPX].set(k + 1, (vy + self.oxq.coeff(k)) * inv)
        st[IPY].set(k + 1, (-vx + self.oyq.coeff(k)) * inv)
        th_next = Jet.const(self.spec, 1.0 if k == 0 else 0.0)
        st[ITH].set(k + 1, th_next * inv if k == 0 else th_next)
        st[IEPS].set(k + 1, Jet.const(self.spec, 0.0))
        self._aux_order(k + 1)
        self.order = k

    def _aux_order(self, k: int):
        spec = self.spec
        mu = self.mu
        st = self.state
        xk = st[IX].coeff(k)
        yk = st[IY].coeff(k)
        self.d1.set(k, xk - mu if k == 0 else xk)
        self.d2.set(k, xk + (1.0 - mu) if k == 0 else xk)
        if k == 0:
            # dependency-tight squares keep the distance bounds positive
            # even when a coordinate box straddles zero
            ysq = jet_sqr(yk)
            r1s = jet_sqr(self.d1.coeff(0)) + ysq
            r2s = jet_sqr(self.d2.coeff(0)) + ysq
        else:
            r1s = conv(self.d1, self.d1, k) + conv(st[IY], st[IY], k)
            r2s = conv(self.d2, self.d2, k) + conv(st[IY], st[IY], k)
        self.r1s.set(k, r1s)
        self.r2s.set(k, r2s)
        if k == 0:
            lo1 = float(np.min(r1s.lo[..., 0]))
            lo2 = float(np.min(r2s.lo[..., 0]))
            if min(lo1, lo2) < SINGULARITY_RADIUS**2:
                raise SingularPosition("Taylor step seeded too close to a primary")
            ir1 = jet_reciprocal(jet_mul(r1s, r1s.sqrt()))
            ir2 = jet_reciprocal(jet_mul(r2s, r2s.sqrt()))
            self.ir1c.set(0, ir1)
            self.ir2c.set(0, ir2)
            self._recip_r1s0 = jet_reciprocal(r1s)
            self._recip_r2s0 = jet_reciprocal(r2s)
            th0 = st[ITH].coeff(0)
            self.sin.set(0, th0.sin())
            self.cos.set(0, th0.cos())
            den0 = jet_mul(st[IEPS].coeff(0), self.cos.coeff(0)) + 1.0
            self.den.set(0, den0)
            self._recip_den0 = jet_reciprocal(den0)
            self.q.set(0, self._recip_den0)
        else:
            self.ir1c.set(
                k, power_coeff(self.r1s, self.ir1c, self._wt, self._recip_r1s0, k)
            )
            self.ir2c.set(
                k, power_coeff(self.r2s, self.ir2c, self._wt, self._recip_r2s0, k)
            )
            inv_k = self._inv_kp1[k - 1] if spec.interval else 1.0 / k
            self.sin.set(k, self.cos.coeff(k - 1) * inv_k)
            self.cos.set(k, (-self.sin.coeff(k - 1)) * inv_k)
            self.den.set(k, jet_mul(st[IEPS].coeff(0), self.cos.coeff(k)))
            self.q.set(k, -jet_mul(conv_tail(self.den, self.q, k), self._recip_den0))
        ox = (
            xk
            - conv(self.d1, self.ir1c, k) * (1.0 - mu)
            - conv(self.d2, self.ir2c, k) * mu
        )
        self.ox.set(k, ox)
        oyf = (
            (-(1.0 - mu)) * self.ir1c.coeff(k)
            - mu * self.ir2c.coeff(k)
            + (1.0 if k == 0 else 0.0)
        )
        # oy = Y * (1 - (1-mu) ir1c - mu ir2c): fold the factor into a
        # dedicated series via the ox slot layout
        self._oyf_series.set(k, oyf)
        self.oy.set(k, conv(st[IY], self._oyf_series, k))
        self.oxq.set(k, conv(self.ox, self.q, k))
        self.oyq.set(k, conv(self.oy, self.q, k))

    def rhs_order0(self):
        """Field value jets at the seed (after seed())."""
        st = self.state
        vx = st[IPX].coeff(0) + st[IY].coeff(0)
        vy = st[IPY].coeff(0) - st[IX].coeff(0)
        return [
            vx,
            vy,
            vy + self.oxq.coeff(0),
            -vx + self.oyq.coeff(0),
            Jet.const(self.spec, 1.0),
            Jet.const(self.spec, 0.0),
        ]

    def eval_poly(self, h, through_order: int, var: int = None):
        """Horner evaluation at time h (float or Interval) of the state
        polynomial(s) through the given order; returns list of jets."""
        out = []
        idxs = range(NVARS) if var is None else [var]
        for i in idxs:
            s = self.state[i]
            acc = s.coeff(through_order)
            for k in range(through_order - 1, -1, -1):
                acc = acc * h + s.coeff(k)
            out.append(acc)
        return out if var is None else out[0]


def field_jets(jets, mu: float):
    """Right-hand side at a jet-valued state (order-0 shortcut)."""
    fs = FlowSeries(jets[0].spec, mu, 0)
    fs.seed(jets)
    return fs.rhs_order0()
