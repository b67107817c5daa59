"""Coordinate charts, smooth fields, finite-difference jets, and quadrature.

Everything downstream (curvature, variations, experiments) is built on four
primitives defined here:

* ``Chart`` -- a coordinate box with periodicity flags and singular margins
  (e.g. polar-angle poles).
* ``TensorField`` / ``ScalarField`` -- closed-form component callables,
  vectorized over batches of chart points.
* ``FDScheme`` + jet plans -- batched finite-difference stencils (Fornberg
  weights, tensor-producted per axis, Richardson-extrapolated, one-sided
  near non-periodic boundaries).
* ``QuadratureRule`` -- Gauss-Legendre x trapezoid tensor-product rules with
  the metric volume element applied in :func:`integrate`.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from functools import lru_cache
import math

import numpy as np

from .errors import ChartDomainError, NotPositiveDefiniteError, StencilError

__all__ = [
    "Chart",
    "TensorField",
    "ScalarField",
    "FDScheme",
    "QuadratureRule",
    "fornberg_weights",
    "build_quadrature",
    "integrate",
    "integrate_values",
    "fd_derivative",
    "JetPlan",
    "build_jet_plan",
    "metric_axis_scales",
]


# ---------------------------------------------------------------------------
# charts


def _per_axis_pairs(values, dim, name):
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 0:
        arr = np.full((dim, 2), float(arr))
    elif arr.shape == (dim,):
        arr = np.column_stack([arr, arr])
    elif arr.shape != (dim, 2):
        raise ValueError(f"{name} must be scalar, ({dim},) or ({dim},2), got {arr.shape}")
    return arr


@dataclass(frozen=True)
class Chart:
    """A coordinate box with per-axis periodicity and singular margins.

    ``singular_margin[a] = (lo, hi)`` is the width of the band near each end
    of axis ``a`` that pointwise random sampling must avoid (coordinate
    singularities such as polar-angle poles).  A much smaller *hard* margin
    (``hard_margin``, default 1e-6 on singular ends) bounds where fields may
    actually be differentiated; quadrature nodes go up to the hard margin
    because the volume density vanishes at the singular set.
    """

    box: np.ndarray                 # (n, 2)
    periodic: np.ndarray            # (n,) bool
    singular_margin: np.ndarray     # (n, 2)
    hard_margin: np.ndarray = None  # (n, 2)

    def __init__(self, box, periodic=None, singular_margin=0.0, hard_margin=None):
        box = np.asarray(box, dtype=float)
        if box.ndim != 2 or box.shape[1] != 2:
            raise ValueError("box must be an (n,2) array of intervals")
        n = box.shape[0]
        if n < 1:
            raise ValueError("chart needs at least one axis")
        if np.any(box[:, 1] <= box[:, 0]):
            raise ValueError("every axis interval must be nondegenerate")
        if periodic is None:
            periodic = np.zeros(n, dtype=bool)
        periodic = np.asarray(periodic, dtype=bool)
        sm = _per_axis_pairs(singular_margin, n, "singular_margin")
        if np.any(sm < 0):
            raise ValueError("singular margins must be nonnegative")
        extent = box[:, 1] - box[:, 0]
        if np.any(sm.max(axis=1) >= extent / 2):
            raise ValueError("singular margin must be smaller than half the axis extent")
        if np.any(sm[periodic] != 0):
            raise ValueError("a periodic axis has zero singular margin")
        if hard_margin is None:
            hm = np.where(sm > 0, np.minimum(1e-6, sm), 0.0)
        else:
            hm = _per_axis_pairs(hard_margin, n, "hard_margin")
        object.__setattr__(self, "box", box)
        object.__setattr__(self, "periodic", periodic)
        object.__setattr__(self, "singular_margin", sm)
        object.__setattr__(self, "hard_margin", hm)

    @property
    def dim(self):
        return self.box.shape[0]

    @property
    def extent(self):
        return self.box[:, 1] - self.box[:, 0]

    def fd_band(self):
        """Interval per axis inside which stencils must fit (hard margins removed)."""
        lo = self.box[:, 0] + self.hard_margin[:, 0]
        hi = self.box[:, 1] - self.hard_margin[:, 1]
        return np.column_stack([lo, hi])

    def require_in_band(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        band = self.fd_band()
        for a in range(self.dim):
            if self.periodic[a]:
                continue
            bad = (pts[:, a] < band[a, 0]) | (pts[:, a] > band[a, 1])
            if np.any(bad):
                x = pts[np.argmax(bad)]
                raise ChartDomainError(
                    f"point {x} lies outside the allowed band of axis {a} "
                    f"[{band[a,0]:.6g}, {band[a,1]:.6g}] (singular margin or box edge)")
        return pts

    def sample_points(self, rng, count, margin=None):
        """Uniform random points avoiding singular margins (pointwise-check policy)."""
        if margin is None:
            margin = self.singular_margin
        margin = _per_axis_pairs(margin, self.dim, "margin")
        lo = self.box[:, 0] + np.where(self.periodic, 0.0, margin[:, 0])
        hi = self.box[:, 1] - np.where(self.periodic, 0.0, margin[:, 1])
        u = rng.uniform(size=(count, self.dim))
        return lo + u * (hi - lo)

    def subchart(self, axes):
        """Chart restricted to the given axes (used for boundary charts)."""
        axes = list(axes)
        return Chart(self.box[axes], self.periodic[axes], self.singular_margin[axes],
                     self.hard_margin[axes])


# ---------------------------------------------------------------------------
# fields


class TensorField:
    """A covariant tensor field given by a closed-form component callable.

    ``fn`` maps an (m, n) batch of chart points to an (m, n, ..., n) array of
    components (``rank`` trailing index axes).  Outside an optional ``support``
    box the components are exactly zero and ``fn`` is never called.
    """

    def __init__(self, rank, fn, symmetric=False, support=None, name=None):
        if rank < 0:
            raise ValueError("rank must be >= 0")
        if symmetric and rank != 2:
            raise ValueError("the symmetric flag applies to rank-2 fields only")
        self.rank = int(rank)
        self._fn = fn
        self.symmetric = bool(symmetric)
        self.support = None if support is None else np.asarray(support, dtype=float)
        self.name = name

    def evaluate(self, points):
        pts = np.asarray(points, dtype=float)
        single = pts.ndim == 1
        pts = np.atleast_2d(pts)
        m, n = pts.shape
        shape = (m,) + (n,) * self.rank
        if self.support is None:
            out = np.asarray(self._fn(pts), dtype=float).reshape(shape)
        else:
            inside = np.all((pts >= self.support[:, 0]) & (pts <= self.support[:, 1]), axis=1)
            out = np.zeros(shape)
            if np.any(inside):
                out[inside] = np.asarray(self._fn(pts[inside]), dtype=float).reshape(
                    (int(inside.sum()),) + shape[1:])
        if self.symmetric:
            out = 0.5 * (out + np.swapaxes(out, -1, -2))
        return out[0] if single else out

    def __call__(self, points):
        return self.evaluate(points)

    # t-path combinations g + t*h and the like
    def __add__(self, other):
        if not isinstance(other, TensorField) or other.rank != self.rank:
            return NotImplemented
        return TensorField(self.rank,
                           lambda p: self.evaluate(p) + other.evaluate(p),
                           symmetric=self.symmetric and other.symmetric)

    def __rmul__(self, c):
        c = float(c)
        return TensorField(self.rank, lambda p: c * self.evaluate(p),
                           symmetric=self.symmetric, support=self.support)


class ScalarField(TensorField):
    """Rank-0 convenience wrapper."""

    def __init__(self, fn, support=None, name=None):
        super().__init__(0, fn, support=support, name=name)


def constant_scalar(c):
    c = float(c)
    return ScalarField(lambda p: np.full(len(p), c))


# ---------------------------------------------------------------------------
# finite differences


@dataclass(frozen=True)
class FDScheme:
    """Stencil order, base step (chart units) and Richardson depth."""

    stencil_order: int = 4
    step: float = 1e-3
    richardson_levels: int = 2

    def __post_init__(self):
        if self.stencil_order < 2 or self.stencil_order % 2:
            raise ValueError("stencil_order must be a positive even integer")
        if not self.step > 0:
            raise ValueError("step must be positive")
        if not 1 <= self.richardson_levels <= 3:
            raise ValueError("richardson_levels must be 1..3")

    def coarsened(self, factor):
        """Same scheme with the base step scaled (for outer nested derivatives)."""
        return FDScheme(self.stencil_order, self.step * factor, self.richardson_levels)


def fornberg_weights(offsets, d):
    """FD weights for the d-th derivative at 0 from the given node offsets.

    Classic Fornberg recursion; exact for polynomials of degree < len(offsets).
    """
    x = np.asarray(offsets, dtype=float)
    n = len(x)
    if n <= d:
        raise ValueError("need more than d nodes for the d-th derivative")
    c = np.zeros((n, d + 1))
    c1, c4 = 1.0, x[0]
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, d)
        c2, c5, c4 = 1.0, c4, x[i]
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c[:, d]


@lru_cache(maxsize=4096)
def _cached_weights(base, shift, d):
    return fornberg_weights(np.asarray(base) + shift, d)


def _centered_halfwidth(d, p):
    # smallest symmetric window achieving accuracy order p for derivative d
    if d % 2:
        return (p + d - 1) // 2
    return (p + d - 2) // 2


def _richardson_coeffs(p, levels):
    """Coefficients over steps s/2^j cancelling error powers p..p+levels-2."""
    if levels == 1:
        return np.array([1.0])
    A = np.ones((levels, levels))
    b = np.zeros(levels)
    b[0] = 1.0
    for k in range(levels - 1):
        A[k + 1] = [2.0 ** (-j * (p + k)) for j in range(levels)]
    return np.linalg.solve(A, b)


class JetPlan:
    """Precomputed stencil geometry turning cloud field values into derivatives.

    A plan is built for a fixed (chart, points, scheme, multi-index set).  The
    *cloud* is the union of all stencil points; :meth:`evaluate` samples a
    field once on the cloud and contracts per-point Fornberg weights to return
    every requested mixed partial at every point.  Windows shift automatically
    (same accuracy order, one-sided) near non-periodic band edges.
    """

    def __init__(self, chart, points, scheme, multi_indices, axis_scales=None):
        pts = chart.require_in_band(points)
        self.chart = chart
        self.points = pts
        self.scheme = scheme
        m, n = pts.shape
        if axis_scales is None:
            scales = np.ones((m, n))
        else:
            scales = np.broadcast_to(np.asarray(axis_scales, dtype=float), (m, n))
        band = chart.fd_band()
        lam = _richardson_coeffs(scheme.stencil_order, scheme.richardson_levels)
        blocks = []
        offset_chunks = []
        total = 0
        for mi in multi_indices:
            mi = tuple(sorted(mi))
            if mi == ():
                offs = np.zeros((m, 1, n))
                wts = np.ones((m, 1))
                blocks.append((mi, slice(total, total + 1), wts))
                offset_chunks.append(offs)
                total += 1
                continue
            axes = sorted(set(mi))
            dcounts = [mi.count(a) for a in axes]
            lev_offs, lev_wts = [], []
            for lev, la in enumerate(lam):
                ax_off, ax_wt = [], []
                for a, d in zip(axes, dcounts):
                    s = scales[:, a] * (scheme.step / 2 ** lev)
                    off, wt = self._axis_windows(pts[:, a], a, d, s, band, chart.periodic[a])
                    ax_off.append(off)   # (m, N_a) chart offsets
                    ax_wt.append(wt)     # (m, N_a), includes 1/s^d
                # tensor product across the involved axes
                S = int(np.prod([o.shape[1] for o in ax_off]))
                offs = np.zeros((m, S, n))
                wts = np.full((m, S), la)
                stride = S
                for a, off, wt in zip(axes, ax_off, ax_wt):
                    N = off.shape[1]
                    stride //= N
                    idx = (np.arange(S) // stride) % N
                    offs[:, :, a] = off[:, idx]
                    wts *= wt[:, idx]
                lev_offs.append(offs)
                lev_wts.append(wts)
            offs = np.concatenate(lev_offs, axis=1)
            wts = np.concatenate(lev_wts, axis=1)
            blocks.append((mi, slice(total, total + offs.shape[1]), wts))
            offset_chunks.append(offs)
            total += offs.shape[1]
        self.blocks = blocks
        offsets = np.concatenate(offset_chunks, axis=1)      # (m, S_total, n)
        self.cloud = pts[:, None, :] + offsets
        # wrap periodic axes so cloud points stay canonical (fields need not care,
        # but support boxes on periodic charts do)
        for a in range(n):
            if chart.periodic[a]:
                lo, ext = chart.box[a, 0], chart.extent[a]
                self.cloud[:, :, a] = lo + np.mod(self.cloud[:, :, a] - lo, ext)

    def _axis_windows(self, x, axis, d, s, band, is_periodic):
        """Per-point window offsets (chart units) and weights (with the 1/s^d
        factor folded in) for one axis; ``s`` is a per-point step array."""
        p = self.scheme.stencil_order
        K = _centered_halfwidth(d, p)
        base = np.arange(-K, K + 1)
        sd = s ** d
        if is_periodic:
            wt = fornberg_weights(base, d)
            return (base[None, :] * s[:, None],
                    wt[None, :] / sd[:, None])
        lo, hi = band[axis]
        fits = ((x + base[0] * s >= lo - 1e-15) & (x + base[-1] * s <= hi + 1e-15))
        if np.all(fits):
            wt = fornberg_weights(base, d)
            return (base[None, :] * s[:, None],
                    wt[None, :] / sd[:, None])
        # enlarge so shifted windows keep the accuracy order, then shift to fit
        N = max(2 * K + 1, d + p)
        base = np.arange(N) - (N - 1) // 2
        tmin = np.ceil((lo - x) / s - base[0] - 1e-12).astype(int)
        tmax = np.floor((hi - x) / s - base[-1] + 1e-12).astype(int)
        if np.any(tmin > tmax):
            i = int(np.argmax(tmin > tmax))
            raise StencilError(
                f"stencil of {N} nodes at step {s[i]:g} does not fit inside axis {axis} "
                f"band [{lo:.6g}, {hi:.6g}] around x={x[i]:.6g}")
        t = np.clip(0, tmin, tmax)
        offs = (base[None, :] + t[:, None]) * s[:, None]
        wts = np.empty((len(x), N))
        for shift in np.unique(t):
            sel = t == shift
            wts[sel] = _cached_weights(tuple(base), int(shift), d)
        return offs, wts / sd[:, None]

    def evaluate(self, fld, max_chunk=400_000):
        """Sample ``fld`` on the cloud and return {multi_index: derivative array}."""
        m, S, n = self.cloud.shape
        comp_shape = (n,) * fld.rank
        vals = np.empty((m, S) + comp_shape)
        rows = max(1, max_chunk // S)
        for i0 in range(0, m, rows):
            i1 = min(m, i0 + rows)
            chunk = self.cloud[i0:i1].reshape(-1, n)
            vals[i0:i1] = fld.evaluate(chunk).reshape((i1 - i0, S) + comp_shape)
        out = {}
        for mi, sl, wts in self.blocks:
            out[mi] = np.einsum("ms,ms...->m...", wts, vals[:, sl])
        return out

    def evaluate_values(self, vals):
        """Contract precomputed cloud values (same layout as ``evaluate`` uses)."""
        out = {}
        for mi, sl, wts in self.blocks:
            out[mi] = np.einsum("ms,ms...->m...", wts, vals[:, sl])
        return out

    def cloud_values(self, fld, max_chunk=400_000):
        """Field values on the cloud, for reuse across linear combinations."""
        m, S, n = self.cloud.shape
        comp_shape = (n,) * fld.rank
        vals = np.empty((m, S) + comp_shape)
        rows = max(1, max_chunk // S)
        for i0 in range(0, m, rows):
            i1 = min(m, i0 + rows)
            chunk = self.cloud[i0:i1].reshape(-1, n)
            vals[i0:i1] = fld.evaluate(chunk).reshape((i1 - i0, S) + comp_shape)
        return vals


def _jet_multi_indices(n, order):
    mis = [()]
    if order >= 1:
        mis += [(a,) for a in range(n)]
    if order >= 2:
        mis += [(a, b) for a in range(n) for b in range(a, n)]
    if order >= 3:
        raise ValueError("jet plans go up to order 2; nest plans for higher derivatives")
    return mis


def build_jet_plan(chart, points, scheme, order=2, axis_scales=None):
    """Plan for the full jet (value + all derivatives) up to the given order.

    ``axis_scales`` (per point, per axis) rescales the steps; passing the
    square root of the metric diagonal makes stencils effectively act in
    locally orthonormal coordinates, which keeps rounding amplification flat
    near polar coordinate degeneracies.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    return JetPlan(chart, pts, scheme, _jet_multi_indices(chart.dim, order),
                   axis_scales=axis_scales)


def metric_axis_scales(metric, points, floor=1e-3):
    """sqrt of the metric diagonal, the natural per-axis step scaling."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    g = metric.evaluate(pts) if isinstance(metric, TensorField) else np.asarray(metric)
    diag = np.diagonal(g, axis1=-2, axis2=-1)
    return np.sqrt(np.clip(diag, floor ** 2, None))


def fd_derivative(fld, chart, point, multi_index, scheme=FDScheme()):
    """Mixed partial of a field at a point (or batch), per-axis orders given.

    ``multi_index`` is a length-n sequence of per-axis derivative orders,
    e.g. ``(1, 1, 0)`` for the mixed x0-x1 partial in three dimensions.
    """
    orders = tuple(int(k) for k in multi_index)
    if len(orders) != chart.dim or any(k < 0 for k in orders):
        raise ValueError("multi_index must give a nonnegative order per axis")
    mi = tuple(a for a, k in enumerate(orders) for _ in range(k))
    pts = np.asarray(point, dtype=float)
    single = pts.ndim == 1
    plan = JetPlan(chart, np.atleast_2d(pts), scheme, [mi])
    out = plan.evaluate(fld)[mi]
    return out[0] if single else out


# ---------------------------------------------------------------------------
# quadrature


@dataclass(frozen=True)
class QuadratureRule:
    """Tensor-product nodes/weights in chart units (no metric factor)."""

    nodes: np.ndarray        # (M, n)
    weights: np.ndarray      # (M,)
    orders: tuple
    axes_nodes: tuple = dc_field(default=(), repr=False)
    axes_weights: tuple = dc_field(default=(), repr=False)


def build_quadrature(chart, order_per_axis, breaks=None):
    """Gauss-Legendre per non-periodic axis, uniform trapezoid per periodic axis.

    Non-periodic axes integrate over the hard-margin-trimmed interval; the
    trimming is at most the hard margin (default 1e-6) on singular ends.
    ``breaks`` maps axis index to interior breakpoints: the axis is split into
    panels carrying the full per-axis order each, so piecewise-polynomial
    integrands with kinks at the breakpoints are still integrated exactly.
    """
    n = chart.dim
    orders = order_per_axis
    if np.isscalar(orders):
        orders = (int(orders),) * n
    orders = tuple(int(q) for q in orders)
    if len(orders) != n:
        raise ValueError("need one quadrature order per axis")
    if any(q < 2 for q in orders):
        raise ValueError("quadrature order must be >= 2 per axis")
    breaks = breaks or {}
    band = chart.fd_band()
    axes_nodes, axes_weights = [], []
    for a, q in enumerate(orders):
        if chart.periodic[a]:
            lo, ext = chart.box[a, 0], chart.extent[a]
            x = lo + ext * np.arange(q) / q
            w = np.full(q, ext / q)
        else:
            lo, hi = band[a]
            edges = [lo] + sorted(b for b in breaks.get(a, ()) if lo < b < hi) + [hi]
            x0, w0 = np.polynomial.legendre.leggauss(q)
            xs, ws = [], []
            for e0, e1 in zip(edges[:-1], edges[1:]):
                xs.append(0.5 * (e1 + e0) + 0.5 * (e1 - e0) * x0)
                ws.append(0.5 * (e1 - e0) * w0)
            x = np.concatenate(xs)
            w = np.concatenate(ws)
        axes_nodes.append(x)
        axes_weights.append(w)
    grids = np.meshgrid(*axes_nodes, indexing="ij")
    nodes = np.column_stack([g.ravel() for g in grids])
    wgrids = np.meshgrid(*axes_weights, indexing="ij")
    weights = np.ones(len(nodes))
    for wg in wgrids:
        weights = weights * wg.ravel()
    return QuadratureRule(nodes, weights, orders, tuple(axes_nodes), tuple(axes_weights))


def metric_density(gvals, nodes=None):
    """sqrt(det g) per node; raises naming the first non-PD node."""
    try:
        chol = np.linalg.cholesky(gvals)
        return np.prod(np.diagonal(chol, axis1=-2, axis2=-1), axis=-1)
    except np.linalg.LinAlgError:
        eig = np.linalg.eigvalsh(gvals)
        bad = np.where(eig[:, 0] <= 0)[0]
        where = f"node {bad[0]}" if nodes is None else f"node {bad[0]} at {nodes[bad[0]]}"
        raise NotPositiveDefiniteError(
            f"metric is not positive definite at {where} (min eigenvalue {eig[bad[0],0]:.3e})")


def integrate_values(values, gvals, rule):
    """Sum of weights * values * sqrt(det g) over the rule's nodes."""
    dens = metric_density(gvals, rule.nodes)
    return float(np.dot(rule.weights, np.asarray(values) * dens))


def integrate(fld, metric, rule):
    """Integral of a scalar field against the metric volume element."""
    vals = fld.evaluate(rule.nodes) if isinstance(fld, TensorField) else np.asarray(fld)
    gvals = metric.evaluate(rule.nodes) if isinstance(metric, TensorField) else np.asarray(metric)
    return integrate_values(vals, gvals, rule)
