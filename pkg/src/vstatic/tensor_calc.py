"""Curvature stack and covariant calculus for metrics given as chart fields.

All operations accept a batch of chart points and return batched component
arrays.  The heavy lifting is split into two layers:

* algebraic kernels (``christoffel_from_jets``, ``curvature_from_jets``) that
  turn metric jets (g, dg, ddg) into curvature -- reused by the fast
  candidate-scanning paths in the experiment driver;
* field-level wrappers that build jet plans, evaluate the metric, and call
  the kernels.

Index conventions are locked by the space-form test
``riemann_low[a,b,c,d] == lam * (g_ad g_bc - g_ac g_bd)`` on the unit sphere,
so that the curvature contraction ``<Rm.h, h> = R_abcd h^ad h^bc`` reduces to
``-lam (|h|^2 + (tr h)^2)  + <W.h, h>`` on Einstein backgrounds.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .chart_core import (FDScheme, JetPlan, TensorField, build_jet_plan,
                         metric_axis_scales)
from .errors import NotPositiveDefiniteError, PreconditionError

__all__ = [
    "CurvaturePack",
    "christoffel_from_jets",
    "curvature_from_jets",
    "curvature_from_scaled_jets",
    "curvature_step_scales",
    "metric_jets",
    "christoffel",
    "curvature",
    "covariant_derivative",
    "covariant_derivative_field",
    "divergence",
    "divergence_field",
    "divergence_one_form",
    "hessian_scalar",
    "laplacian",
    "rm_dot",
    "weyl_dot",
    "q_of_w",
    "weyl_equation_residual",
    "raise_all",
    "tensor_norm2",
    "trace",
]


@dataclass
class CurvaturePack:
    """Curvature data at a batch of points (leading axis indexes the batch)."""

    points: np.ndarray
    g: np.ndarray              # (m, n, n)
    ginv: np.ndarray
    christoffel: np.ndarray    # (m, c, a, b) = Gamma^c_{ab}
    dchristoffel: np.ndarray   # (m, e, c, a, b) = d_e Gamma^c_{ab}
    riemann_low: np.ndarray    # (m, a, b, c, d)
    ricci: np.ndarray          # (m, b, c) = g^{ad} R_{abcd}
    scalar: np.ndarray         # (m,)
    weyl_low: Optional[np.ndarray]   # None in dimension 2

    @property
    def dim(self):
        return self.g.shape[-1]


def _inv(g):
    return np.linalg.inv(g)


def christoffel_from_jets(g, ginv, dg):
    """Gamma^c_{ab} from the metric and its first derivatives.

    ``dg[m, a, i, j]`` means d_a g_ij.
    """
    br = dg + np.einsum("mbad->mabd", dg) - np.einsum("mdab->mabd", dg)
    return 0.5 * np.einsum("mcd,mabd->mcab", ginv, br)


def curvature_from_jets(g, dg, ddg, want_weyl=True):
    """Full curvature pack from second-order metric jets.

    ``ddg[m, e, a, i, j]`` means d_e d_a g_ij (symmetric in e, a).
    """
    m, n = g.shape[0], g.shape[-1]
    ginv = _inv(g)
    br = dg + np.einsum("mbad->mabd", dg) - np.einsum("mdab->mabd", dg)
    Gam = 0.5 * np.einsum("mcd,mabd->mcab", ginv, br)
    dginv = -np.einsum("mci,meij,mjd->mecd", ginv, dg, ginv)
    dbr = ddg + np.einsum("mebad->meabd", ddg) - np.einsum("medab->meabd", ddg)
    dGam = 0.5 * (np.einsum("mecd,mabd->mecab", dginv, br)
                  + np.einsum("mcd,meabd->mecab", ginv, dbr))
    # R^a_{bcd} = d_d Gam^a_{cb} - d_c Gam^a_{db} + Gam^a_{dm}Gam^m_{cb} - Gam^a_{cm}Gam^m_{db}
    rup = (np.einsum("mdacb->mabcd", dGam) - np.einsum("mcadb->mabcd", dGam)
           + np.einsum("madp,mpcb->mabcd", Gam, Gam)
           - np.einsum("macp,mpdb->mabcd", Gam, Gam))
    rlow = np.einsum("mae,mebcd->mabcd", g, rup)
    ricci = np.einsum("mad,mabcd->mbc", ginv, rlow)
    scalar = np.einsum("mbc,mbc->m", ginv, ricci)
    weyl = None
    if want_weyl and n >= 3:
        schouten = (ricci - (scalar / (2 * (n - 1)))[:, None, None] * g) / (n - 2)
        kn = (np.einsum("mad,mbc->mabcd", schouten, g)
              + np.einsum("mbc,mad->mabcd", schouten, g)
              - np.einsum("mac,mbd->mabcd", schouten, g)
              - np.einsum("mbd,mac->mabcd", schouten, g))
        weyl = rlow - kn
    return g, ginv, Gam, dGam, rlow, ricci, scalar, weyl


def metric_jets(metric, chart, points, scheme, order=2, axis_scales=None):
    """(g, dg[, ddg]) at the points, via one jet plan over the metric field."""
    plan = build_jet_plan(chart, points, scheme, order=order, axis_scales=axis_scales)
    jets = plan.evaluate(metric)
    return jets_to_arrays(jets, chart.dim, order)


def jets_to_arrays(jets, n, order=2):
    """Repack a {multi_index: value} jet dict into stacked derivative arrays."""
    g = jets[()]
    out = [g]
    if order >= 1:
        dg = np.stack([jets[(a,)] for a in range(n)], axis=1)
        out.append(dg)
    if order >= 2:
        m = g.shape[0]
        shape = (m, n, n) + g.shape[1:]
        ddg = np.empty(shape)
        for a in range(n):
            for b in range(n):
                ddg[:, a, b] = jets[(min(a, b), max(a, b))]
        out.append(ddg)
    return tuple(out)


def christoffel(metric, chart, points, scheme=FDScheme()):
    g, dg = metric_jets(metric, chart, points, scheme, order=1)
    return christoffel_from_jets(g, _inv(g), dg)


def curvature_step_scales(metric, chart, points, scheme):
    """Per-point step multipliers sigma = 1/sqrt(diag g), capped so the
    stencil reach stays well inside each axis extent and, near singular axis
    ends (poles), inside the distance to the singular set -- a window shifted
    across a pole samples the metric where it varies on the scale of that
    distance and ruins the truncation error."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    g = metric.evaluate(pts) if isinstance(metric, TensorField) else np.asarray(metric)
    diag = np.clip(np.diagonal(g, axis1=-2, axis2=-1), 1e-30, None)
    sigma = 1.0 / np.sqrt(diag)
    reach = scheme.stencil_order + 2
    cap = np.broadcast_to(0.04 * chart.extent / (reach * scheme.step),
                          sigma.shape).copy()
    for a in range(chart.dim):
        if chart.periodic[a]:
            continue
        lo_sing = chart.singular_margin[a, 0] > 0
        hi_sing = chart.singular_margin[a, 1] > 0
        if not (lo_sing or hi_sing):
            continue
        dist = np.full(len(pts), np.inf)
        if lo_sing:
            dist = np.minimum(dist, pts[:, a] - chart.box[a, 0])
        if hi_sing:
            dist = np.minimum(dist, chart.box[a, 1] - pts[:, a])
        cap[:, a] = np.minimum(cap[:, a],
                               np.clip(dist, 0.0, None) / (1.05 * reach * scheme.step))
    return np.maximum(np.minimum(sigma, cap), np.minimum(1e-2, cap))


def curvature_from_scaled_jets(g, dg, ddg, sigma, want_weyl=True):
    """Curvature from raw metric jets with a per-point diagonal rescale.

    The jets are pushed through the local linear map x = x0 + diag(sigma) z
    (the same map whose step scaling produced them), assembled in the
    rescaled, well-conditioned components, and transformed back.  With
    ``sigma ~ 1/sqrt(diag g)`` rounding amplification stays flat near polar
    coordinate degeneracies.
    """
    gt = g * sigma[:, :, None] * sigma[:, None, :]
    dgt = dg * sigma[:, :, None, None] * sigma[:, None, :, None] * sigma[:, None, None, :]
    ddgt = (ddg * sigma[:, :, None, None, None] * sigma[:, None, :, None, None]
            * sigma[:, None, None, :, None] * sigma[:, None, None, None, :])
    gt_, ginvt, Gamt, dGamt, rlowt, riccit, scalar, weylt = curvature_from_jets(
        gt, dgt, ddgt, want_weyl)
    inv = 1.0 / sigma
    ginv = ginvt * sigma[:, :, None] * sigma[:, None, :]
    # Gamma^c_{ab} = sigma_c / (sigma_a sigma_b) * tilde Gamma
    Gam = Gamt * sigma[:, :, None, None] * inv[:, None, :, None] * inv[:, None, None, :]
    dGam = (dGamt * inv[:, :, None, None, None] * sigma[:, None, :, None, None]
            * inv[:, None, None, :, None] * inv[:, None, None, None, :])
    down4 = inv[:, :, None, None, None] * inv[:, None, :, None, None] \
        * inv[:, None, None, :, None] * inv[:, None, None, None, :]
    rlow = rlowt * down4
    ricci = riccit * inv[:, :, None] * inv[:, None, :]
    weyl = None if weylt is None else weylt * down4
    return g, ginv, Gam, dGam, rlow, ricci, scalar, weyl


def curvature(metric, chart, points, scheme=FDScheme(), want_weyl=None):
    """CurvaturePack at the given point batch.

    Weyl is computed by subtracting the Schouten part of ``riemann_low``;
    requesting it in dimension 2 is an error.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    n = chart.dim
    if want_weyl is None:
        want_weyl = n >= 3
    if want_weyl and n < 3:
        raise ValueError("the Weyl tensor is undefined in dimension 2")
    sigma = curvature_step_scales(metric, chart, pts, scheme)
    g, dg, ddg = metric_jets(metric, chart, pts, scheme, order=2, axis_scales=sigma)
    if np.any(np.linalg.eigvalsh(g)[:, 0] <= 0):
        raise NotPositiveDefiniteError("metric is singular or indefinite at a curvature point")
    g, ginv, Gam, dGam, rlow, ricci, scalar, weyl = curvature_from_scaled_jets(
        g, dg, ddg, sigma, want_weyl)
    return CurvaturePack(pts, g, ginv, Gam, dGam, rlow, ricci, scalar, weyl)


# ---------------------------------------------------------------------------
# covariant calculus


def covariant_derivative(fld, metric, chart, points, scheme=FDScheme()):
    """nabla_a T_{b...} with one Christoffel correction per covariant slot.

    Returns an array of rank ``fld.rank + 1`` components per point, the new
    derivative index first.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    n = chart.dim
    plan = build_jet_plan(chart, pts, scheme, order=1)
    jets = plan.evaluate(fld)
    T = jets[()]
    dT = np.stack([jets[(a,)] for a in range(n)], axis=1)
    if fld.rank == 0:
        return dT
    Gam = christoffel(metric, chart, pts, scheme)
    out = dT.copy()
    for slot in range(fld.rank):
        Tm = np.moveaxis(T, 1 + slot, 1)                      # (m, slot_idx, rest...)
        corr = np.einsum("mcab,mc...->mab...", Gam, Tm)       # (m, a, slot_idx, rest)
        out -= np.moveaxis(corr, 2, 2 + slot)
    return out


def covariant_derivative_field(fld, metric, chart, scheme=FDScheme()):
    """nabla T as a derived TensorField (for nesting)."""
    return TensorField(fld.rank + 1,
                       lambda p: covariant_derivative(fld, metric, chart, p, scheme))


def divergence(h, metric, chart, points, scheme=FDScheme()):
    """(delta h)_b = -nabla^a h_{ab} for a symmetric 2-tensor field."""
    if h.rank != 2:
        raise ValueError("divergence expects a rank-2 field")
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    nab = covariant_derivative(h, metric, chart, pts, scheme)
    g = metric.evaluate(pts)
    return -np.einsum("mab,mabc->mc", _inv(g), nab)


def divergence_field(h, metric, chart, scheme=FDScheme()):
    return TensorField(1, lambda p: divergence(h, metric, chart, p, scheme))


def divergence_one_form(om, metric, chart, points, scheme=FDScheme()):
    """(delta om) = -nabla^a om_a; applying it to (delta h) realizes delta^2 h."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    nab = covariant_derivative(om, metric, chart, pts, scheme)
    g = metric.evaluate(pts)
    return -np.einsum("mab,mab->m", _inv(g), nab)


def hessian_scalar(f, metric, chart, points, scheme=FDScheme()):
    """nabla^2 f via a direct second-derivative plan (no nesting).

    Scalar components do not degenerate near poles, so metric-adaptive steps
    can be used directly without rescaling the values.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    sigma = curvature_step_scales(metric, chart, pts, scheme)
    plan = build_jet_plan(chart, pts, scheme, order=2, axis_scales=sigma)
    _, df, ddf = jets_to_arrays(plan.evaluate(f), chart.dim, 2)
    Gam = christoffel(metric, chart, pts, scheme)
    return ddf - np.einsum("mcab,mc->mab", Gam, df)


def laplacian(fld, metric, chart, points, scheme=FDScheme(), outer_scheme=None):
    """Rough Laplacian g^{ab} nabla_a nabla_b T.

    Scalars use a direct Hessian; higher ranks nest two covariant derivatives,
    the outer one with ``outer_scheme`` (defaults to the inner scheme; pass a
    coarsened scheme when T itself is finite-difference derived).
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    g = metric.evaluate(pts)
    ginv = _inv(g)
    if fld.rank == 0:
        hess = hessian_scalar(fld, metric, chart, pts, scheme)
        return np.einsum("mab,mab->m", ginv, hess)
    outer = outer_scheme or scheme
    dT = covariant_derivative_field(fld, metric, chart, scheme)
    ddT = covariant_derivative(dT, metric, chart, pts, outer)
    return np.einsum("mab,mab...->m...", ginv, ddT)


# ---------------------------------------------------------------------------
# contractions


def raise_all(T, ginv):
    """Raise every index of a batched covariant tensor."""
    out = T
    rank = T.ndim - 1
    for slot in range(rank):
        out = np.moveaxis(np.einsum("mab,mb...->ma...", ginv, np.moveaxis(out, 1 + slot, 1)),
                          1, 1 + slot)
    return out


def tensor_norm2(T, ginv):
    """|T|^2 with all indices raised by ginv."""
    Tup = raise_all(T, ginv)
    axes = tuple(range(1, T.ndim))
    return np.sum(T * Tup, axis=axes)


def trace(h, ginv):
    return np.einsum("mab,mab->m", ginv, h)


def rm_dot(h, pack):
    """<Rm.h, h> = R_{abcd} h^{ad} h^{bc}."""
    hup = raise_all(h, pack.ginv)
    return np.einsum("mabcd,mad,mbc->m", pack.riemann_low, hup, hup)


def weyl_dot(h, pack):
    """<W.h, h> = W_{abcd} h^{ad} h^{bc}."""
    if pack.weyl_low is None:
        raise ValueError("the Weyl tensor is undefined in dimension 2")
    hup = raise_all(h, pack.ginv)
    return np.einsum("mabcd,mad,mbc->m", pack.weyl_low, hup, hup)


def q_of_w(pack, weyl=None):
    """Quadratic Weyl combination Q(W) = B_ijkl - B_jikl + B_ikjl - B_jkil,
    with B_ijkl = g^{pq} g^{rs} W_{pijr} W_{qkls}."""
    W = pack.weyl_low if weyl is None else weyl
    if W is None:
        raise ValueError("the Weyl tensor is undefined in dimension 2")
    B = np.einsum("mpq,mrs,mpijr,mqkls->mijkl", pack.ginv, pack.ginv, W, W)
    return (B - np.einsum("mjikl->mijkl", B)
            + np.einsum("mikjl->mijkl", B) - np.einsum("mjkil->mijkl", B))


def weyl_field(metric, chart, scheme=FDScheme()):
    """The Weyl tensor as a derived rank-4 field (for nesting into Laplacians)."""
    return TensorField(4, lambda p: curvature(metric, chart, p, scheme).weyl_low)


def weyl_equation_residual(model, points, scheme=FDScheme(), outer_scheme=None,
                           einstein_tol=1e-4):
    """Pointwise residual of  Delta W - 2(n-1) lam W - 2 Q(W)  on an Einstein model.

    The rough Laplacian of the FD-derived Weyl field uses a coarser outer step
    by default (three-plus nested derivative budget).
    """
    chart, metric, lam = model.chart, model.metric, model.einstein_lambda
    n = chart.dim
    if lam is None:
        raise PreconditionError("model is not Einstein: no lambda available")
    if n < 4:
        raise ValueError("the Weyl equation is checked in dimension >= 4 only")
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    pack = curvature(metric, chart, pts, scheme)
    dev = np.abs(pack.ricci - (n - 1) * lam * pack.g).max()
    if dev > einstein_tol:
        raise PreconditionError(f"model fails the Einstein check: |Ric-(n-1)lam g| = {dev:.2e}")
    outer = outer_scheme or FDScheme(scheme.stencil_order, max(scheme.step, 0.03),
                                     scheme.richardson_levels)
    W = weyl_field(metric, chart, scheme)
    lap = laplacian(W, metric, chart, pts, scheme, outer_scheme=outer)
    return lap - 2 * (n - 1) * lam * pack.weyl_low - 2 * q_of_w(pack)
