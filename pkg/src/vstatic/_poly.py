"""Exact multivariate polynomial algebra for perturbation families.

Compactly supported fields are built as ``(1 - q)_+^k * P`` with
``q = |y|^2 / rho^2`` and ``P`` a polynomial: every derivative stays in the
same class (product rule keeps the bump factored), so second derivatives of
Airy potentials and double-curl potentials are exact closed forms rather than
finite differences.
"""

from __future__ import annotations

import numpy as np

__all__ = ["Poly", "BumpPoly", "ExpBump"]

_CHUNK = 65536


class Poly:
    """Polynomial in ``nvars`` variables, stored as {exponent tuple: coeff}."""

    def __init__(self, nvars, terms=None):
        self.nvars = int(nvars)
        self.terms = {}
        if terms:
            for e, c in terms.items():
                if c != 0.0:
                    self.terms[tuple(int(k) for k in e)] = float(c)
        self._arrays = None

    @classmethod
    def constant(cls, c, nvars):
        return cls(nvars, {(0,) * nvars: float(c)})

    @classmethod
    def variable(cls, a, nvars):
        e = [0] * nvars
        e[a] = 1
        return cls(nvars, {tuple(e): 1.0})

    def __add__(self, other):
        if np.isscalar(other):
            other = Poly.constant(other, self.nvars)
        out = dict(self.terms)
        for e, c in other.terms.items():
            out[e] = out.get(e, 0.0) + c
        return Poly(self.nvars, out)

    __radd__ = __add__

    def __neg__(self):
        return Poly(self.nvars, {e: -c for e, c in self.terms.items()})

    def __sub__(self, other):
        if np.isscalar(other):
            other = Poly.constant(other, self.nvars)
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if np.isscalar(other):
            return Poly(self.nvars, {e: c * other for e, c in self.terms.items()})
        out = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                out[e] = out.get(e, 0.0) + c1 * c2
        return Poly(self.nvars, out)

    __rmul__ = __mul__

    def diff(self, axis):
        out = {}
        for e, c in self.terms.items():
            if e[axis] == 0:
                continue
            en = list(e)
            en[axis] -= 1
            out[tuple(en)] = out.get(tuple(en), 0.0) + c * e[axis]
        return Poly(self.nvars, out)

    def _compiled(self):
        if self._arrays is None:
            if not self.terms:
                self._arrays = (np.zeros((0, self.nvars), dtype=int), np.zeros(0))
            else:
                exps = np.array(list(self.terms.keys()), dtype=int)
                coef = np.array(list(self.terms.values()))
                self._arrays = (exps, coef)
        return self._arrays

    def __call__(self, pts):
        return eval_poly_stack([self], pts)[:, 0]


class BumpPoly:
    """``(1 - q)_+^k * P(y)`` with ``q = |y - center|^2 / rho^2``; exact derivatives.

    Vanishes identically for q >= 1 and is C^{k-1} across the support edge.
    """

    def __init__(self, k, poly, rho, center=None):
        self.k = int(k)
        self.poly = poly
        self.rho = float(rho)
        self.center = np.zeros(poly.nvars) if center is None else np.asarray(center, float)
        n = poly.nvars
        q = Poly(n)
        for a in range(n):
            ya = Poly.variable(a, n) - float(self.center[a])
            q = q + ya * ya
        self._q = q * (1.0 / self.rho ** 2)

    def diff(self, axis):
        # d[(1-q)^k P] = (1-q)^{k-1} [ -k dq P + (1-q) dP ]
        if self.k == 0:
            raise ValueError("cannot differentiate a bump of vanishing smoothness exponent")
        one_minus_q = 1.0 - self._q
        newp = (-float(self.k)) * self._q.diff(axis) * self.poly + one_minus_q * self.poly.diff(axis)
        out = BumpPoly(self.k - 1, newp, self.rho, self.center)
        return out

    def __call__(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        q = self._q(pts)
        base = np.clip(1.0 - q, 0.0, None) ** self.k
        return base * self.poly(pts)

    def __mul__(self, c):
        return BumpPoly(self.k, self.poly * float(c), self.rho, self.center)

    __rmul__ = __mul__

    def __add__(self, other):
        if not isinstance(other, BumpPoly) or other.k != self.k or other.rho != self.rho \
                or np.any(other.center != self.center):
            raise ValueError("can only add bump polynomials with identical bump factors")
        return BumpPoly(self.k, self.poly + other.poly, self.rho, self.center)


class ExpBump:
    """``exp(1 - 1/(1-q)) * P(y) / (1-q)^k`` with ``q = |y-c|^2/rho^2``.

    A genuinely C-infinity compactly supported class, closed under
    differentiation (the derivative raises k by 2 and updates P).  Values and
    all derivatives vanish at the support edge, so Gauss quadrature of
    products of these fields converges spectrally.
    """

    def __init__(self, poly, rho, center=None, k=0):
        self.poly = poly
        self.rho = float(rho)
        self.k = int(k)
        n = poly.nvars
        self.center = np.zeros(n) if center is None else np.asarray(center, float)
        q = Poly(n)
        for a in range(n):
            ya = Poly.variable(a, n) - float(self.center[a])
            q = q + ya * ya
        self._q = q * (1.0 / self.rho ** 2)

    def diff(self, axis):
        one_minus_q = 1.0 - self._q
        dq = self._q.diff(axis)
        # d[e^{1-1/(1-q)} P (1-q)^{-k}]
        #   = e^{...} (1-q)^{-(k+2)} [ -dq P + (1-q)^2 dP + k (1-q) dq P ]
        newp = (-1.0) * dq * self.poly + one_minus_q * one_minus_q * self.poly.diff(axis) \
            + float(self.k) * one_minus_q * dq * self.poly
        return ExpBump(newp, self.rho, self.center, self.k + 2)

    def __call__(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        q = self._q(pts)
        out = np.zeros(len(pts))
        inside = q < 1.0 - 1e-14
        if np.any(inside):
            om = 1.0 - q[inside]
            expo = 1.0 - 1.0 / om - self.k * np.log(om)
            out[inside] = np.exp(expo) * self.poly(pts[inside])
        return out

    def __mul__(self, c):
        return ExpBump(self.poly * float(c), self.rho, self.center, self.k)

    __rmul__ = __mul__

    def __add__(self, other):
        if not isinstance(other, ExpBump) or other.rho != self.rho \
                or np.any(other.center != self.center):
            raise ValueError("can only add bumps with identical supports")
        if other.k == self.k:
            return ExpBump(self.poly + other.poly, self.rho, self.center, self.k)
        hi, lo = (self, other) if self.k > other.k else (other, self)
        om = 1.0 - self._q
        p = lo.poly
        for _ in range((hi.k - lo.k) // 2):
            p = p * om * om
        if (hi.k - lo.k) % 2:
            p = p * om
        return ExpBump(hi.poly + p, self.rho, self.center, hi.k)


def _power_table(x, maxdeg):
    """Columns 1, x, x^2, ..., x^maxdeg by cumulative multiplication."""
    out = np.empty((len(x), maxdeg + 1))
    out[:, 0] = 1.0
    for k in range(1, maxdeg + 1):
        out[:, k] = out[:, k - 1] * x
    return out


def eval_poly_stack(polys, pts):
    """Evaluate several polynomials over one point batch, sharing power tables.

    Returns an (m, K) array, one column per polynomial.
    """
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    m = len(pts)
    nvars = polys[0].nvars
    index = {}
    for p in polys:
        for e in p.terms:
            index.setdefault(e, len(index))
    if not index:
        return np.zeros((m, len(polys)))
    exps = np.array(list(index.keys()), dtype=int)
    order = np.argsort([index[tuple(e)] for e in exps])
    exps = exps[order]
    C = np.zeros((len(exps), len(polys)))
    for j, p in enumerate(polys):
        for e, c in p.terms.items():
            C[index[e], j] = c
    maxdeg = exps.max(axis=0)
    out = np.empty((m, len(polys)))
    for i0 in range(0, m, _CHUNK):
        i1 = min(m, i0 + _CHUNK)
        x = pts[i0:i1]
        acc = _power_table(x[:, 0], maxdeg[0])[:, exps[:, 0]]
        for a in range(1, nvars):
            acc *= _power_table(x[:, a], maxdeg[a])[:, exps[:, a]]
        out[i0:i1] = acc @ C
    return out


def eval_bump_stack(bumps, pts):
    """Evaluate several BumpPoly fields sharing one bump factor and one
    stacked polynomial pass; all must agree in (k, rho, center)."""
    b0 = bumps[0]
    for b in bumps[1:]:
        if b.k != b0.k or b.rho != b0.rho or np.any(b.center != b0.center):
            raise ValueError("stacked bumps must share their bump factor")
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    q = b0._q(pts)
    base = np.clip(1.0 - q, 0.0, None) ** b0.k
    vals = eval_poly_stack([b.poly for b in bumps], pts)
    return base[:, None] * vals
