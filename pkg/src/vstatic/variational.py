"""Variation formulas for scalar curvature, mean curvature and volume, the
boundary functional built from a static potential, its first and second
variations, the Einstein specializations, and the finite-difference oracle
for nonlinear functionals of the metric.

All pointwise identities are assembled from two order-2 jet plans (metric and
perturbation) in locally rescaled coordinates via ``_jetalg``; nothing here
nests stencils, so the noise budget stays near 1e-9 even at near-pole
quadrature nodes.  The finite-difference oracle drives the *nonlinear*
functionals R(g), H(g), Vol(g) along the path g = gbar + t h and
differentiates in t; it shares one stencil cloud across the whole path.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Optional

import numpy as np

from ._jetalg import Jet2, cov1_rank2, cov2_rank2, hessian_from_jets, inv_jets, jmul
from .boundary_geom import adapted_frame, boundary_integrate, induced_metric, \
    mean_curvature, second_fundamental_form
from .chart_core import (FDScheme, TensorField, build_jet_plan, integrate_values,
                         metric_axis_scales)
from .errors import NotPositiveDefiniteError, PreconditionError
from .model_spaces import Perturbation
from .tensor_calc import (curvature, curvature_from_jets, curvature_step_scales,
                          jets_to_arrays)

__all__ = [
    "VariationReport",
    "pointwise_invariants",
    "DR", "D2R", "DH", "D2H", "DVol", "D2Vol",
    "scalar_functional", "volume_functional", "mean_curvature_functional",
    "F_functional", "DF", "curly_R",
    "I_Omega", "I_Sigma", "D2F",
    "einstein_F", "einstein_DF", "gamma_h_einstein",
    "einstein_D2R_integral", "bochner_cross_identity", "theta_inequality",
    "alpha", "eta",
    "fd_oracle", "remainder_decay", "MetricPathScan", "BoundaryPathScan",
    "boundary_fields", "divergence_l2",
]

_DEFAULT = FDScheme()


def _field(h):
    return h.h if isinstance(h, Perturbation) else h


def _require_tangential(h, model, tol=1e-8):
    if isinstance(h, Perturbation):
        if not h.tangentially_vanishing:
            raise PreconditionError(
                "perturbation does not carry the tangentially-vanishing flag")
        return
    surf = model.boundary
    if surf is None:
        raise PreconditionError("model has no boundary hypersurface")
    rng = np.random.default_rng(17)
    bp = surf.sample_points(rng, 12)
    fr = adapted_frame(surf, model.metric, bp)
    comp = np.einsum("mia,mjb,mab->mij", fr[:, :-1], fr[:, :-1], _field(h).evaluate(bp))
    dev = float(np.abs(comp).max())
    if dev > tol:
        raise PreconditionError(f"h is not tangentially vanishing: |h_ij| = {dev:.2e}")


# ---------------------------------------------------------------------------
# pointwise invariant engine


def _scale_tensor2_jets(g, dg, ddg, sigma):
    """Push raw rank-2 jets through the diagonal map x = x0 + diag(sigma) z."""
    gt = g * sigma[:, :, None] * sigma[:, None, :]
    dgt = dg * sigma[:, :, None, None] * sigma[:, None, :, None] * sigma[:, None, None, :]
    ddgt = (ddg * sigma[:, :, None, None, None] * sigma[:, None, :, None, None]
            * sigma[:, None, None, :, None] * sigma[:, None, None, None, :])
    return Jet2(gt, dgt, ddgt)


def pointwise_invariants(h, model, points, scheme=_DEFAULT, vstatic=None,
                         second_variation=True):
    """Every pointwise scalar the variation formulas need, at a point batch.

    Returns a dict of (m,) arrays: tr_h, norm_h2, norm_ring2, dr, d2r,
    curly_r, gamma_einstein, grad_h2 (= |nabla h|^2), dtr_h2, delta_h2,
    cross (= nabla_a h_bc nabla^b h^ac), weyl_dot, rm_dot, ric_dot,
    delta2_h, lap_tr_h, i_omega_integrand (when a potential is given).
    ``second_variation=False`` skips the d2r block (cheaper first-order runs).
    """
    hf = _field(h)
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    chart, metric = model.chart, model.metric
    n = chart.dim
    sigma = curvature_step_scales(metric, chart, pts, scheme)
    plan = build_jet_plan(chart, pts, scheme, order=2, axis_scales=sigma)
    G = _scale_tensor2_jets(*jets_to_arrays(plan.evaluate(metric), n, 2), sigma)
    H = _scale_tensor2_jets(*jets_to_arrays(plan.evaluate(hf), n, 2), sigma)
    _, ginv, Gam, dGam, rlow, ricci, scalar, weyl = curvature_from_jets(
        G.v, G.d1, G.d2, want_weyl=n >= 3)
    Gi = inv_jets(G)
    out = {}

    # traces and norms (all full contractions: invariant under the rescale)
    trj = jmul("mab,mab->m", Gi, H)
    out["tr_h"] = trj.v
    hup1 = jmul("mca,mab->mcb", Gi, H)            # h^c_b
    hup2 = jmul("mcb,mdb->mcd", hup1, Gi)         # h^{cd}
    nh2 = jmul("mcd,mcd->m", hup2, H)
    out["norm_h2"] = nh2.v
    out["norm_ring2"] = nh2.v - trj.v ** 2 / n
    out["rm_dot"] = np.einsum("mabcd,mad,mbc->m", rlow, hup2.v, hup2.v)
    out["ric_dot"] = np.einsum("mbc,mbc->m", ricci, hup2.v)
    if weyl is not None:
        out["weyl_dot"] = np.einsum("mabcd,mad,mbc->m", weyl, hup2.v, hup2.v)
    else:
        out["weyl_dot"] = np.zeros(len(pts))

    # first covariant derivative blocks
    nab = cov1_rank2(H, Gam)                      # nabla_a h_bc
    out["grad_h2"] = np.einsum("mabc,mdef,mad,mbe,mcf->m",
                               nab, nab, Gi.v, Gi.v, Gi.v)
    delta_h = -np.einsum("mab,mabc->mc", Gi.v, nab)
    out["delta_h2"] = np.einsum("mc,md,mcd->m", delta_h, delta_h, Gi.v)
    out["cross"] = np.einsum("mabc,mbB,maA,mcC,mBAC->m", nab, Gi.v, Gi.v, Gi.v, nab)
    out["dtr_h2"] = np.einsum("ma,mb,mab->m", trj.d1, trj.d1, Gi.v)
    out["delta_dot_dtr"] = np.einsum("ma,mb,mab->m", delta_h, trj.d1, Gi.v)

    # second covariant derivative blocks
    hess_tr = hessian_from_jets(trj, Gam)
    out["lap_tr_h"] = np.einsum("mab,mab->m", Gi.v, hess_tr)
    out["h_dot_hess_tr"] = np.einsum("mab,mab->m", hup2.v, hess_tr)
    nn = cov2_rank2(H, Gam, dGam)                 # nabla_a nabla_b h_cd
    out["delta2_h"] = np.einsum("mac,mbd,mabcd->m", Gi.v, Gi.v, nn)

    out["dr"] = -out["lap_tr_h"] + out["delta2_h"] - out["ric_dot"]

    if second_variation:
        # gamma(h^2) for the second variation
        x = jmul("mag,mgd->mad", H, Gi)
        h2 = jmul("mad,mdb->mab", x, H)           # (h^2)_ab, symmetric
        trj2 = jmul("mab,mab->m", Gi, h2)
        hess_tr2 = hessian_from_jets(trj2, Gam)
        lap_tr2 = np.einsum("mab,mab->m", Gi.v, hess_tr2)
        nn2 = cov2_rank2(h2, Gam, dGam)
        delta2_h2 = np.einsum("mac,mbd,mabcd->m", Gi.v, Gi.v, nn2)
        h2up = jmul("mca,mab->mcb", Gi, h2)
        h2upup = jmul("mcb,mdb->mcd", h2up, Gi)
        ric_dot_h2 = np.einsum("mbc,mbc->m", ricci, h2upup.v)
        gamma_h2 = -lap_tr2 + delta2_h2 - ric_dot_h2

        # Laplacian of |h|^2
        hess_nh2 = hessian_from_jets(nh2, Gam)
        lap_nh2 = np.einsum("mab,mab->m", Gi.v, hess_nh2)

        out["d2r"] = (-2.0 * gamma_h2 - lap_nh2 - 0.5 * out["grad_h2"]
                      - 0.5 * out["dtr_h2"] + 2.0 * out["h_dot_hess_tr"]
                      - 2.0 * out["delta_dot_dtr"] + out["cross"])

    rbar = model.scalar_const
    out["curly_r"] = (out["rm_dot"] + 2.0 * out["tr_h"] * out["ric_dot"]
                      - 2.0 * rbar / (n - 1) * out["tr_h"] ** 2)
    lam = model.einstein_lambda
    if lam is not None:
        out["gamma_einstein"] = -out["lap_tr_h"] - (n - 1) * lam * out["tr_h"]
    if vstatic is not None:
        fv = vstatic.f.evaluate(pts)
        kap = vstatic.kappa
        out["i_omega_integrand"] = -0.5 * (
            (out["grad_h2"] + out["dtr_h2"] - 2.0 * out["curly_r"]) * fv
            + (n + 3.0) / (n - 1.0) * out["tr_h"] ** 2 * kap)
    out["scalar"] = scalar
    return out


# ---------------------------------------------------------------------------
# interior variations


def DR(h, model, points, scheme=_DEFAULT):
    """First variation of scalar curvature: -Lap(tr h) + delta^2 h - Ric.h."""
    return pointwise_invariants(h, model, points, scheme, second_variation=False)["dr"]


def D2R(h, model, points, scheme=_DEFAULT):
    """Second variation of scalar curvature (seven-term expression)."""
    return pointwise_invariants(h, model, points, scheme)["d2r"]


def curly_R(h, model, points, scheme=_DEFAULT):
    """<Rm.h,h> + 2 (tr h) Ric.h - 2 Rbar/(n-1) (tr h)^2."""
    return pointwise_invariants(h, model, points, scheme)["curly_r"]


def gamma_h_einstein(h, model, points, scheme=_DEFAULT, div_tol=1e-6):
    """-Lap(tr h) - (n-1) lam (tr h), valid for divergence-free h; also
    cross-checked against DR by callers."""
    if model.einstein_lambda is None:
        raise PreconditionError("model is not Einstein")
    res = divergence_l2(h, model, scheme)
    if res > div_tol:
        raise PreconditionError(f"h is not divergence-free: |delta h|_L2 = {res:.2e}")
    return pointwise_invariants(h, model, points, scheme,
                                second_variation=False)["gamma_einstein"]


def divergence_l2(h, model, scheme=_DEFAULT):
    """L2 norm of delta h over the model's quadrature nodes."""
    inv = pointwise_invariants(h, model, model.quadrature.nodes, scheme,
                               second_variation=False)
    g = model.metric.evaluate(model.quadrature.nodes)
    return float(np.sqrt(max(integrate_values(inv["delta_h2"], g, model.quadrature), 0.0)))


def DVol(h, model):
    """(1/2) integral of tr h."""
    hf = _field(h)
    nodes = model.quadrature.nodes
    g = model.metric.evaluate(nodes)
    ginv = np.linalg.inv(g)
    trh = np.einsum("mab,mab->m", ginv, hf.evaluate(nodes))
    return 0.5 * integrate_values(trh, g, model.quadrature)


def D2Vol(h, model):
    """(1/4) integral of (tr h)^2 - 2 |h|^2."""
    hf = _field(h)
    nodes = model.quadrature.nodes
    g = model.metric.evaluate(nodes)
    ginv = np.linalg.inv(g)
    hv = hf.evaluate(nodes)
    trh = np.einsum("mab,mab->m", ginv, hv)
    nh2 = np.einsum("mab,mcd,mac,mbd->m", hv, hv, ginv, ginv)
    return 0.25 * integrate_values(trh ** 2 - 2.0 * nh2, g, model.quadrature)


# ---------------------------------------------------------------------------
# boundary variations (adapted-frame components)


def boundary_fields(h, model, surface=None, points=None, scheme=_DEFAULT,
                    vstatic=None):
    """Framed boundary data of h: h_nn, h_in, tangential/normal divergence
    sums, background A and H, and (optionally) framed derivatives of f."""
    hf = _field(h)
    surf = surface or model.boundary
    if surf is None:
        raise PreconditionError("model has no boundary hypersurface")
    pts = surf.nodes() if points is None else np.atleast_2d(points)
    fr = adapted_frame(surf, model.metric, pts)
    tang, nu = fr[:, :-1], fr[:, -1]
    A, Hbar = second_fundamental_form(surf, model.metric, pts, scheme)
    hv = hf.evaluate(pts)
    from .tensor_calc import covariant_derivative
    nab = covariant_derivative(hf, model.metric, model.chart, pts, scheme)
    out = {
        "points": pts,
        "A": A, "H": Hbar,
        "h_nn": np.einsum("ma,mb,mab->m", nu, nu, hv),
        "h_in": np.einsum("mia,mb,mab->mi", tang, nu, hv),
        "h_ij": np.einsum("mia,mjb,mab->mij", tang, tang, hv),
        # sum_i (nabla_{e_i} h)(nu, e_i) and sum_i (nabla_nu h)(e_i, e_i)
        "div_i_h_ni": np.einsum("mia,mb,mic,mabc->m", tang, nu, tang, nab),
        "divn_tr": np.einsum("ma,mib,mic,mabc->m", nu, tang, tang, nab),
    }
    if vstatic is not None:
        plan = build_jet_plan(model.chart, pts, scheme, order=1)
        jets = plan.evaluate(vstatic.f)
        df = np.stack([jets[(a,)] for a in range(model.chart.dim)], axis=1)
        out["f"] = jets[()]
        out["dn_f"] = np.einsum("ma,ma->m", nu, df)
        out["di_f"] = np.einsum("mia,ma->mi", tang, df)
    return out


def DH(h, model, surface=None, points=None, scheme=_DEFAULT, fields=None):
    """First variation of mean curvature for tangentially vanishing h."""
    _require_tangential(h, model)
    bf = fields or boundary_fields(h, model, surface, points, scheme)
    return (0.5 * bf["h_nn"] * bf["H"] - bf["div_i_h_ni"] + 0.5 * bf["divn_tr"])


def D2H(h, model, surface=None, points=None, scheme=_DEFAULT, fields=None):
    """Second variation of mean curvature for tangentially vanishing h."""
    _require_tangential(h, model)
    bf = fields or boundary_fields(h, model, surface, points, scheme)
    hin2 = np.einsum("mi,mi->m", bf["h_in"], bf["h_in"])
    return ((-0.25 * bf["h_nn"] ** 2 + hin2) * bf["H"]
            + bf["h_nn"] * (bf["div_i_h_ni"] - 0.5 * bf["divn_tr"]))


# ---------------------------------------------------------------------------
# nonlinear functionals


def scalar_functional(g, model, points=None, scheme=_DEFAULT):
    """R(g) pointwise (full curvature stack on g, not gbar)."""
    pts = model.quadrature.nodes if points is None else points
    return curvature(g, model.chart, pts, scheme, want_weyl=False).scalar


def volume_functional(g, model, rule=None):
    rule = rule or model.quadrature
    gv = g.evaluate(rule.nodes)
    return integrate_values(np.ones(len(rule.nodes)), gv, rule)


def mean_curvature_functional(g, model, surface=None, points=None, scheme=_DEFAULT):
    surf = surface or model.boundary
    pts = surf.nodes() if points is None else points
    return mean_curvature(surf, g, pts, scheme)


def F_functional(g, model, vstatic, surface=None, scheme=_DEFAULT,
                 measures="background"):
    """integral R(g) f dv_gbar + 2 integral H(g) f dsig_gbar - 2 kappa Vol(g).

    The first two integrals use the *background* measures; ``measures=
    'candidate'`` switches them to the measures of g (that variant fails
    criticality and is pinned by a regression test).
    """
    surf = surface or model.boundary
    if surf is None:
        raise PreconditionError("the boundary functional needs a ball model")
    nodes = model.quadrature.nodes
    fv = vstatic.f.evaluate(nodes)
    Rg = scalar_functional(g, model, nodes, scheme)
    gv_meas = model.metric if measures == "background" else g
    gvals = gv_meas.evaluate(nodes)
    term1 = integrate_values(Rg * fv, gvals, model.quadrature)
    Hg = mean_curvature_functional(g, model, surf, scheme=scheme)
    fb = vstatic.f.evaluate(surf.nodes())
    gi = induced_metric(surf, gv_meas)
    dens = np.sqrt(np.linalg.det(gi)) if gi.shape[-1] > 1 else np.sqrt(gi[:, 0, 0])
    term2 = 2.0 * float(np.dot(surf.quadrature.weights, Hg * fb * dens))
    term3 = -2.0 * vstatic.kappa * volume_functional(g, model)
    return term1 + term2 + term3


def DF(h, model, vstatic, surface=None, scheme=_DEFAULT):
    """First variation of the boundary functional; ~0 at a certified potential."""
    _require_tangential(h, model)
    surf = surface or model.boundary
    nodes = model.quadrature.nodes
    inv = pointwise_invariants(h, model, nodes, scheme, second_variation=False)
    g = model.metric.evaluate(nodes)
    fv = vstatic.f.evaluate(nodes)
    term1 = integrate_values(inv["dr"] * fv, g, model.quadrature)
    bf = boundary_fields(h, model, surf, scheme=scheme, vstatic=vstatic)
    dh = DH(h, model, surf, scheme=scheme, fields=bf)
    gi = induced_metric(surf, model.metric)
    dens = np.sqrt(np.linalg.det(gi)) if gi.shape[-1] > 1 else np.sqrt(gi[:, 0, 0])
    term2 = 2.0 * float(np.dot(surf.quadrature.weights, dh * bf["f"] * dens))
    term3 = -2.0 * vstatic.kappa * DVol(h, model)
    return term1 + term2 + term3


# ---------------------------------------------------------------------------
# second variation of the boundary functional


def I_Omega(h, model, vstatic, scheme=_DEFAULT, enforce=True, div_tol=1e-6):
    """Interior part of the second variation (quadrature of the stated
    integrand); requires delta h = 0 within the threshold."""
    if enforce:
        res = divergence_l2(h, model, scheme)
        if res > div_tol:
            raise PreconditionError(
                f"I_Omega precondition failed: |delta h|_L2 = {res:.2e} > {div_tol:g}")
    inv = pointwise_invariants(h, model, model.quadrature.nodes, scheme,
                               vstatic=vstatic, second_variation=False)
    g = model.metric.evaluate(model.quadrature.nodes)
    return integrate_values(inv["i_omega_integrand"], g, model.quadrature)


def I_Sigma(h, model, vstatic, surface=None, scheme=_DEFAULT, enforce=True,
            dh_tol=1e-6):
    """Boundary part of the second variation, in adapted-frame components."""
    _require_tangential(h, model)
    surf = surface or model.boundary
    bf = boundary_fields(h, model, surf, scheme=scheme, vstatic=vstatic)
    if enforce:
        dh = DH(h, model, surf, scheme=scheme, fields=bf)
        dev = float(np.abs(dh).max())
        if dev > dh_tol:
            raise PreconditionError(
                f"I_Sigma precondition failed: |DH.h| = {dev:.2e} > {dh_tol:g}")
    hin2 = np.einsum("mi,mi->m", bf["h_in"], bf["h_in"])
    integrand = ((np.einsum("mij,mi,mj->m", bf["A"], bf["h_in"], bf["h_in"])
                  + (hin2 + 0.5 * bf["h_nn"] ** 2) * bf["H"]) * bf["f"]
                 + (2.0 * bf["h_nn"] ** 2 + hin2) * bf["dn_f"]
                 + 2.0 * bf["h_nn"] * np.einsum("mi,mi->m", bf["h_in"], bf["di_f"]))
    gi = induced_metric(surf, model.metric)
    dens = np.sqrt(np.linalg.det(gi)) if gi.shape[-1] > 1 else np.sqrt(gi[:, 0, 0])
    return -float(np.dot(surf.quadrature.weights, integrand * dens))


def D2F(h, model, vstatic, surface=None, scheme=_DEFAULT, enforce=True,
        div_tol=1e-6, dh_tol=1e-6):
    """Second variation of the boundary functional, split and summed."""
    io = I_Omega(h, model, vstatic, scheme, enforce=enforce, div_tol=div_tol)
    isig = I_Sigma(h, model, vstatic, surface, scheme, enforce=enforce, dh_tol=dh_tol)
    return {"I_Omega": io, "I_Sigma": isig, "total": io + isig}


# ---------------------------------------------------------------------------
# Einstein specialization


def einstein_F(g, model, scheme=_DEFAULT):
    """integral R(g) dv_gbar + 2 (n-1) lam Vol(g) on a closed Einstein model."""
    if not model.closed:
        raise PreconditionError("the Einstein functional needs a closed model")
    if model.einstein_lambda is None:
        raise PreconditionError("model is not Einstein")
    nodes = model.quadrature.nodes
    Rg = scalar_functional(g, model, nodes, scheme)
    gb = model.metric.evaluate(nodes)
    n = model.dim
    return (integrate_values(Rg, gb, model.quadrature)
            + 2.0 * (n - 1) * model.einstein_lambda * volume_functional(g, model))


def einstein_DF(h, model, scheme=_DEFAULT):
    """First variation of the Einstein functional; ~0 at the background."""
    if not model.closed:
        raise PreconditionError("the Einstein functional needs a closed model")
    if model.einstein_lambda is None:
        raise PreconditionError("model is not Einstein")
    nodes = model.quadrature.nodes
    inv = pointwise_invariants(h, model, nodes, scheme, second_variation=False)
    g = model.metric.evaluate(nodes)
    n = model.dim
    return (integrate_values(inv["dr"], g, model.quadrature)
            + 2.0 * (n - 1) * model.einstein_lambda * DVol(h, model))


def einstein_D2R_integral(h, model, scheme=_DEFAULT, tol_flags=1e-6):
    """(lhs, rhs) of the closed-Einstein second-variation integral identity:

    lhs = integral D2R(h,h) dv
    rhs = -1/2 integral (|nabla ring h|^2 - 2 <W.ring h, ring h>
                         - 2 (n-2) lam |ring h|^2) dv

    for traceless divergence-free h (both flags checked).
    """
    if model.einstein_lambda is None or not model.closed:
        raise PreconditionError("needs a closed Einstein model")
    nodes = model.quadrature.nodes
    inv = pointwise_invariants(h, model, nodes, scheme)
    g = model.metric.evaluate(nodes)
    tr_dev = float(np.abs(inv["tr_h"]).max())
    div_res = float(np.sqrt(max(integrate_values(inv["delta_h2"], g, model.quadrature), 0.0)))
    if tr_dev > tol_flags or div_res > tol_flags:
        raise PreconditionError(
            f"needs traceless divergence-free h: |tr h| = {tr_dev:.2e}, "
            f"|delta h|_L2 = {div_res:.2e}")
    n = model.dim
    lam = model.einstein_lambda
    lhs = integrate_values(inv["d2r"], g, model.quadrature)
    rhs_int = (inv["grad_h2"] - 2.0 * inv["weyl_dot"]
               - 2.0 * (n - 2) * lam * inv["norm_ring2"])
    rhs = -0.5 * integrate_values(rhs_int, g, model.quadrature)
    return lhs, rhs


def bochner_cross_identity(h, model, scheme=_DEFAULT):
    """(lhs, rhs) of the integral commutation identity on closed Einstein M:

    integral nabla_a h_bc nabla^b h^ac = integral |delta h|^2
        + <W.ring h, ring h> - n lam |ring h|^2.
    """
    if model.einstein_lambda is None or not model.closed:
        raise PreconditionError("needs a closed Einstein model")
    nodes = model.quadrature.nodes
    inv = pointwise_invariants(h, model, nodes, scheme, second_variation=False)
    g = model.metric.evaluate(nodes)
    n = model.dim
    lam = model.einstein_lambda
    lhs = integrate_values(inv["cross"], g, model.quadrature)
    rhs = integrate_values(inv["delta_h2"] + inv["weyl_dot"]
                           - n * lam * inv["norm_ring2"], g, model.quadrature)
    return lhs, rhs


def theta_inequality(h, model, theta, scheme=_DEFAULT, inv=None):
    """lhs, rhs and the nonnegative defect of the theta-weighted estimate:

    integral |nabla h|^2 >= -2 theta/(1+theta^2) integral (|delta h|^2
        + <W.ring h, ring h>) + 2 n theta lam/(1+theta^2) integral |ring h|^2.

    The defect is integral |nabla_a h_bc + theta nabla_b h_ac|^2 >= 0,
    whose expansion via the commutation identity proves the bound.
    """
    if model.einstein_lambda is None or not model.closed:
        raise PreconditionError("needs a closed Einstein model")
    nodes = model.quadrature.nodes
    if inv is None:
        inv = pointwise_invariants(h, model, nodes, scheme, second_variation=False)
    g = model.metric.evaluate(nodes)
    n = model.dim
    lam = model.einstein_lambda
    th = float(theta)
    grad2 = integrate_values(inv["grad_h2"], g, model.quadrature)
    cross = integrate_values(inv["cross"], g, model.quadrature)
    dl2 = integrate_values(inv["delta_h2"], g, model.quadrature)
    wdot = integrate_values(inv["weyl_dot"], g, model.quadrature)
    ring2 = integrate_values(inv["norm_ring2"], g, model.quadrature)
    lhs = grad2
    rhs = (-2 * th / (1 + th ** 2) * (dl2 + wdot)
           + 2 * n * th * lam / (1 + th ** 2) * ring2)
    defect = (1 + th ** 2) * grad2 + 2 * th * cross
    return {"lhs": lhs, "rhs": rhs, "defect": defect,
            "cross": cross, "delta2": dl2, "weyl_dot": wdot, "ring2": ring2}


def alpha(n, lam):
    """Weyl-norm threshold -(3n-4) lam."""
    return -(3 * n - 4) * lam


def eta(n, lam, w_inf):
    """Coercivity gap (alpha - |W|_inf)/2."""
    return 0.5 * (alpha(n, lam) - w_inf)


# ---------------------------------------------------------------------------
# finite-difference oracle


class MetricPathScan:
    """Shared-stencil evaluation of curvature along g_t = gbar + t h.

    The jet-plan cloud is built once from the background; per t only the
    linear combination of cached cloud values and the algebraic curvature
    assembly are redone.
    """

    def __init__(self, model, h, points, scheme=_DEFAULT):
        self.model = model
        self.points = np.atleast_2d(np.asarray(points, dtype=float))
        self.sigma = curvature_step_scales(model.metric, model.chart,
                                           self.points, scheme)
        self.plan = build_jet_plan(model.chart, self.points, scheme, order=2,
                                   axis_scales=self.sigma)
        self.g_cloud = self.plan.cloud_values(model.metric)
        self.h_cloud = self.plan.cloud_values(_field(h))
        self.n = model.chart.dim

    def scalar_at(self, t):
        return self.scalar_from_values(self.g_cloud + t * self.h_cloud, t)

    def scalar_from_values(self, vals, t=np.nan):
        from .tensor_calc import curvature_from_scaled_jets
        jets = self.plan.evaluate_values(vals)
        g, dg, ddg = jets_to_arrays(jets, self.n, 2)
        if np.any(np.linalg.eigvalsh(g)[:, 0] <= 0):
            raise NotPositiveDefiniteError(
                f"path metric loses positive definiteness at t = {t:g}")
        out = curvature_from_scaled_jets(g, dg, ddg, self.sigma, want_weyl=False)
        return out[6]  # scalar


class BoundaryPathScan:
    """Shared-stencil mean curvature along g_t = gbar + t h at boundary nodes."""

    def __init__(self, model, h, surface=None, points=None, scheme=_DEFAULT):
        from .boundary_geom import mean_curvature_from_jets
        surf = surface or model.boundary
        self.surf = surf
        pts = surf.nodes() if points is None else np.atleast_2d(points)
        self.points = pts
        self.plan = build_jet_plan(model.chart, pts, scheme, order=1)
        self.g_cloud = self.plan.cloud_values(model.metric)
        self.h_cloud = self.plan.cloud_values(_field(h))
        self.n = model.chart.dim
        self._mc = mean_curvature_from_jets

    def H_at(self, t):
        return self.H_from_values(self.g_cloud + t * self.h_cloud, t)

    def H_from_values(self, vals, t=np.nan):
        jets = self.plan.evaluate_values(vals)
        g = jets[()]
        if np.any(np.linalg.eigvalsh(g)[:, 0] <= 0):
            raise NotPositiveDefiniteError(
                f"path metric loses positive definiteness at t = {t:g}")
        dg = np.stack([jets[(a,)] for a in range(self.n)], axis=1)
        return self._mc(g, dg, self.surf.radial_axis, self.surf.angular_axes)


def _t_derivative(func, order, t0, levels):
    """Central t-difference of the given order with Richardson in t."""
    vals = []
    for lev in range(levels):
        t = t0 / 2 ** lev
        if order == 1:
            d = (func(t) - func(-t)) / (2 * t)
        elif order == 2:
            d = (func(t) - 2.0 * func(0.0) + func(-t)) / t ** 2
        else:
            raise ValueError("order must be 1 or 2")
        vals.append(d)
    if levels == 1:
        return vals[0]
    out = vals
    p = 2
    for _ in range(levels - 1):
        out = [(4.0 ** (p // 2) * out[i + 1] - out[i]) / (4.0 ** (p // 2) - 1.0)
               for i in range(len(out) - 1)]
        p += 2
    return out[0]


@dataclass
class OracleResult:
    functional: str
    order: int
    value: object
    t0: float
    levels: int


def fd_oracle(functional, model, h, order, point=None, surface=None,
              vstatic=None, t0=0.05, levels=2, scheme=_DEFAULT):
    """t-derivative of a nonlinear functional along g_t = gbar + t h at t = 0.

    ``functional`` is one of 'scalar' (pointwise, needs point), 'mean_curvature'
    (pointwise on the boundary), 'volume', 'total_scalar',
    'f_functional' (needs vstatic), 'einstein_f'.
    """
    hf = _field(h)
    if functional == "scalar":
        scan = MetricPathScan(model, hf, point, scheme)
        func = scan.scalar_at
    elif functional == "mean_curvature":
        scan = BoundaryPathScan(model, hf, surface, point, scheme)
        func = scan.H_at
    elif functional == "volume":
        nodes = model.quadrature.nodes
        gb = model.metric.evaluate(nodes)
        hv = hf.evaluate(nodes)

        def func(t):
            return integrate_values(np.ones(len(nodes)), gb + t * hv, model.quadrature)
    elif functional == "total_scalar":
        scan = MetricPathScan(model, hf, model.quadrature.nodes, scheme)
        gb = model.metric.evaluate(model.quadrature.nodes)

        def func(t):
            return integrate_values(scan.scalar_at(t), gb, model.quadrature)
    elif functional == "f_functional":
        surf = surface or model.boundary
        scan = MetricPathScan(model, hf, model.quadrature.nodes, scheme)
        bscan = BoundaryPathScan(model, hf, surf, scheme=scheme)
        nodes = model.quadrature.nodes
        gb = model.metric.evaluate(nodes)
        fv = vstatic.f.evaluate(nodes)
        fb = vstatic.f.evaluate(surf.nodes())
        gi = induced_metric(surf, model.metric)
        dens = np.sqrt(np.linalg.det(gi)) if gi.shape[-1] > 1 else np.sqrt(gi[:, 0, 0])
        hv = hf.evaluate(nodes)

        def func(t):
            term1 = integrate_values(scan.scalar_at(t) * fv, gb, model.quadrature)
            term2 = 2.0 * float(np.dot(surf.quadrature.weights, bscan.H_at(t) * fb * dens))
            term3 = -2.0 * vstatic.kappa * integrate_values(
                np.ones(len(nodes)), gb + t * hv, model.quadrature)
            return term1 + term2 + term3
    elif functional == "einstein_f":
        scan = MetricPathScan(model, hf, model.quadrature.nodes, scheme)
        nodes = model.quadrature.nodes
        gb = model.metric.evaluate(nodes)
        hv = hf.evaluate(nodes)
        n = model.dim
        lam = model.einstein_lambda

        def func(t):
            return (integrate_values(scan.scalar_at(t), gb, model.quadrature)
                    + 2.0 * (n - 1) * lam * integrate_values(
                        np.ones(len(nodes)), gb + t * hv, model.quadrature))
    else:
        raise ValueError(f"unknown functional {functional!r}")
    val = _t_derivative(func, order, t0, levels)
    return OracleResult(functional, order, val, t0, levels)


def remainder_decay(model, h, point, ts=(0.2, 0.1, 0.05, 0.025), scheme=_DEFAULT):
    """Measured remainder of the order-2 scalar-curvature expansion and its
    log-log decay slope (cubic for smooth paths)."""
    hf = _field(h)
    pts = np.atleast_2d(point)
    scan = MetricPathScan(model, hf, pts, scheme)
    inv = pointwise_invariants(hf, model, pts, scheme)
    r0 = scan.scalar_at(0.0)
    rem = []
    for t in ts:
        rt = scan.scalar_at(t)
        rem.append(np.abs(rt - r0 - t * inv["dr"] - 0.5 * t * t * inv["d2r"]))
    rem = np.array(rem)  # (T, m)
    val = np.maximum(rem.max(axis=1), 1e-300)
    slope = np.polyfit(np.log(np.asarray(ts)), np.log(val), 1)[0]
    return {"ts": np.asarray(ts), "remainders": rem, "slope": float(slope)}


# ---------------------------------------------------------------------------
# reporting


@dataclass
class VariationReport:
    """Per-identity record: analytic vs oracle with verdict."""

    name: str
    anchor: str
    analytic: float
    oracle: float
    tolerance: float
    relative: bool = True
    digest: dict = dc_field(default_factory=dict)

    @property
    def abs_error(self):
        return abs(self.analytic - self.oracle)

    @property
    def rel_error(self):
        scale = max(abs(self.analytic), abs(self.oracle), 1e-12)
        return self.abs_error / scale

    @property
    def passed(self):
        err = self.rel_error if self.relative else self.abs_error
        return bool(err <= self.tolerance)

    def as_dict(self):
        return {
            "name": self.name, "anchor": self.anchor,
            "lhs": self.analytic, "rhs": self.oracle,
            "err": self.rel_error if self.relative else self.abs_error,
            "tol": self.tolerance, "pass": self.passed,
            "digest": self.digest,
        }
