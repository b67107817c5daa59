"""Products of sin/cos/linear factors with exact derivatives.

Every chart-to-embedding map in the catalog (r omega, sphere embeddings,
product spheres) has components that are sums of products of ``sin(x_a)``,
``cos(x_a)`` and ``x_a`` factors.  Representing them this way gives exact
first, second and third derivatives of embeddings and their Jacobians, which
the gauge module uses to evaluate basis one-forms and their Lie derivatives
without any finite differencing.
"""

from __future__ import annotations

import numpy as np

__all__ = ["TrigPoly", "trig_jets"]

_SIN, _COS, _LIN = 0, 1, 2


class TrigPoly:
    """Sum of coeff * prod of (axis, kind) factors; kinds: sin, cos, linear."""

    def __init__(self, nvars, terms=None):
        self.nvars = nvars
        # term: (coeff, tuple of (axis, kind))
        self.terms = list(terms or [])

    @classmethod
    def lin(cls, axis, nvars):
        return cls(nvars, [(1.0, ((axis, _LIN, 1.0),))])

    @classmethod
    def sin(cls, axis, nvars, freq=1.0):
        return cls(nvars, [(1.0, ((axis, _SIN, float(freq)),))])

    @classmethod
    def cos(cls, axis, nvars, freq=1.0):
        return cls(nvars, [(1.0, ((axis, _COS, float(freq)),))])

    @classmethod
    def const(cls, c, nvars):
        return cls(nvars, [(float(c), ())])

    def __mul__(self, other):
        if np.isscalar(other):
            return TrigPoly(self.nvars, [(c * other, f) for c, f in self.terms])
        out = []
        for c1, f1 in self.terms:
            for c2, f2 in other.terms:
                out.append((c1 * c2, tuple(sorted(f1 + f2))))
        return TrigPoly(self.nvars, out)

    __rmul__ = __mul__

    def __add__(self, other):
        return TrigPoly(self.nvars, self.terms + other.terms)

    def diff(self, axis):
        out = []
        for c, factors in self.terms:
            for i, (ax, kind, fr) in enumerate(factors):
                if ax != axis:
                    continue
                rest = factors[:i] + factors[i + 1:]
                if kind == _SIN:
                    out.append((c * fr, tuple(sorted(rest + ((ax, _COS, fr),)))))
                elif kind == _COS:
                    out.append((-c * fr, tuple(sorted(rest + ((ax, _SIN, fr),)))))
                else:
                    out.append((c, rest))
        return TrigPoly(self.nvars, out)

    def __call__(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        m = len(pts)
        out = np.zeros(m)
        cache = {}
        for c, factors in self.terms:
            acc = np.full(m, c)
            for ax, kind, fr in factors:
                if kind == _LIN:
                    acc = acc * pts[:, ax]
                    continue
                key = (ax, fr)
                if key not in cache:
                    cache[key] = (np.sin(fr * pts[:, ax]), np.cos(fr * pts[:, ax]))
                acc = acc * cache[key][kind]
            out += acc
        return out


_DIFF_CACHE = {}


def _diff_table(components, order):
    """Memoized TrigPoly derivative objects keyed by the component list."""
    key = (id(components), order)
    hit = _DIFF_CACHE.get(key)
    if hit is not None and hit[0] is components:
        return hit[1]
    n = components[0].nvars
    table = {(): list(components)}
    frontier = [()]
    for _ in range(order):
        new_frontier = []
        for mi in frontier:
            for a in range((mi[-1] if mi else 0), n):
                mi2 = mi + (a,)
                table[mi2] = [c.diff(a) for c in table[mi]]
                new_frontier.append(mi2)
        frontier = new_frontier
    _DIFF_CACHE[key] = (components, table)
    return table


def trig_jets(components, pts, order=2):
    """Values and derivatives (up to ``order``) of a list of TrigPoly.

    Returns [vals (m, K), d1 (m, n, K), d2 (m, n, n, K), d3 ...].
    Derivative objects are memoized per component list.
    """
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    m, n = pts.shape
    K = len(components)
    table = _diff_table(tuple(components) if isinstance(components, list) else components, order)         if False else _diff_table(components, order)
    def ev(mi):
        arr = np.empty((m, K))
        for k, c in enumerate(table[mi]):
            arr[:, k] = c(pts)
        return arr
    out = [ev(())]
    if order >= 1:
        d1 = np.empty((m, n, K))
        for a in range(n):
            d1[:, a] = ev((a,))
        out.append(d1)
    if order >= 2:
        d2 = np.empty((m, n, n, K))
        for a in range(n):
            for b in range(a, n):
                v = ev((a, b))
                d2[:, a, b] = v
                d2[:, b, a] = v
        out.append(d2)
    if order >= 3:
        d3 = np.empty((m, n, n, n, K))
        for a in range(n):
            for b in range(a, n):
                for c_ in range(b, n):
                    v = ev((a, b, c_))
                    for pi in {(a, b, c_), (a, c_, b), (b, a, c_),
                               (b, c_, a), (c_, a, b), (c_, b, a)}:
                        d3[:, pi[0], pi[1], pi[2]] = v
        out.append(d3)
    return out
