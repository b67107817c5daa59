"""Catalog of analytic background manifolds, certified static potentials, and
constructive perturbation families.

Models carry a polar (or periodic) chart, a closed-form background metric,
known curvature constants, quadrature, and coordinate hooks:

* ``normal_coords`` / ``normal_jacobian`` -- Cartesian-like coordinates
  ``y = r * omega`` used to build compactly supported tensor families;
* ``to_embedding`` / ``embedding_jacobian`` -- the round embedding of closed
  models (and sphere balls), used to build genuinely smooth global fields.

Potentials and perturbations are never trusted from formulas alone: every
constant and structural flag is re-verified numerically at construction.
"""

from __future__ import annotations

import numpy as np

from ._poly import BumpPoly, ExpBump, Poly, eval_bump_stack
from ._trig import TrigPoly
from .boundary_geom import adapted_frame, make_surface
from .chart_core import (Chart, FDScheme, ScalarField, TensorField,
                         build_quadrature, integrate_values)
from .errors import PreconditionError
from .tensor_calc import (covariant_derivative, curvature, divergence,
                          hessian_scalar, laplacian, tensor_norm2, trace)

__all__ = [
    "ManifoldModel",
    "VStaticPotential",
    "Perturbation",
    "make_model",
    "make_vstatic",
    "make_perturbation",
    "resolve_model",
    "catalog_names",
    "c1_norm",
    "PERTURBATION_FAMILIES",
]


# ---------------------------------------------------------------------------
# angle parametrizations of the round factors (n-1 angles, phi last, periodic)


def _omega(angles, nang):
    """Unit vector on S^{nang} and its angle derivatives; angles (m, nang)."""
    m = len(angles)
    if nang == 1:
        ph = angles[:, 0]
        w = np.stack([np.cos(ph), np.sin(ph)], axis=1)
        dw = np.stack([np.stack([-np.sin(ph), np.cos(ph)], axis=1)], axis=2)
        return w, dw
    if nang == 2:
        th, ph = angles[:, 0], angles[:, 1]
        st, ct, sp, cp = np.sin(th), np.cos(th), np.sin(ph), np.cos(ph)
        w = np.stack([st * cp, st * sp, ct], axis=1)
        d_th = np.stack([ct * cp, ct * sp, -st], axis=1)
        d_ph = np.stack([-st * sp, st * cp, np.zeros(m)], axis=1)
        return w, np.stack([d_th, d_ph], axis=2)
    if nang == 3:
        t1, t2, ph = angles[:, 0], angles[:, 1], angles[:, 2]
        s1, c1, s2, c2 = np.sin(t1), np.cos(t1), np.sin(t2), np.cos(t2)
        sp, cp = np.sin(ph), np.cos(ph)
        z = np.zeros(m)
        w = np.stack([s1 * s2 * cp, s1 * s2 * sp, s1 * c2, c1], axis=1)
        d1 = np.stack([c1 * s2 * cp, c1 * s2 * sp, c1 * c2, -s1], axis=1)
        d2 = np.stack([s1 * c2 * cp, s1 * c2 * sp, -s1 * s2, z], axis=1)
        dp = np.stack([-s1 * s2 * sp, s1 * s2 * cp, z, z], axis=1)
        return w, np.stack([d1, d2, dp], axis=2)
    raise ValueError("angle charts implemented for 1..3 angles")


def _round_angle_metric(angles, nang):
    """Round metric of the unit S^{nang} in the angle chart (diag)."""
    m = len(angles)
    diag = np.ones((m, nang))
    if nang >= 2:
        diag[:, 1] = np.sin(angles[:, 0]) ** 2
    if nang == 3:
        diag[:, 2] = (np.sin(angles[:, 0]) * np.sin(angles[:, 1])) ** 2
    return diag


def _angle_axes_spec(nang):
    """(box rows, periodic flags, singular margins) for the angle chart."""
    rows, per, sm = [], [], []
    for _ in range(nang - 1):
        rows.append([0.0, np.pi])
        per.append(False)
        sm.append([0.05, 0.05])
    rows.append([0.0, 2 * np.pi])
    per.append(True)
    sm.append([0.0, 0.0])
    return rows, per, sm


# ---------------------------------------------------------------------------
# models


class ManifoldModel:
    """Background manifold: chart, metric, constants, quadrature, hooks."""

    def __init__(self, name, kind, chart, metric, dim, scalar_const,
                 einstein_lambda, space_form, weyl_zero, closed, quad_orders,
                 params, normal_coords=None, normal_jacobian=None,
                 to_embedding=None, embedding_jacobian=None, boundary=None,
                 quad_breaks=None):
        self.name = name
        self.kind = kind
        self.chart = chart
        self.metric = metric
        self.dim = dim
        self.scalar_const = scalar_const
        self.einstein_lambda = einstein_lambda
        self.space_form = space_form
        self.weyl_zero = weyl_zero
        self.closed = closed
        self.quad_orders = tuple(quad_orders)
        self.quad_breaks = dict(quad_breaks or {})
        self.quadrature = build_quadrature(chart, self.quad_orders, self.quad_breaks)
        self.support_break = None
        self.params = dict(params)
        self.normal_coords = normal_coords
        self.normal_jacobian = normal_jacobian
        self.to_embedding = to_embedding
        self.embedding_jacobian = embedding_jacobian
        self.boundary = boundary
        self._cache = {}

    def __repr__(self):
        return f"ManifoldModel({self.name!r}, n={self.dim})"

    def sample_points(self, rng, count, margin=None):
        return self.chart.sample_points(rng, count, margin)

    def double_quadrature(self):
        if "double_quad" not in self._cache:
            self._cache["double_quad"] = build_quadrature(
                self.chart, tuple(2 * q for q in self.quad_orders), self.quad_breaks)
        return self._cache["double_quad"]

    def volume(self, metric=None, rule=None):
        rule = rule or self.quadrature
        g = (metric or self.metric).evaluate(rule.nodes)
        return integrate_values(np.ones(len(rule.nodes)), g, rule)

    def l2_norm_tensor(self, h, rule=None):
        rule = rule or self.quadrature
        g = self.metric.evaluate(rule.nodes)
        vals = tensor_norm2(h.evaluate(rule.nodes), np.linalg.inv(g))
        return float(np.sqrt(integrate_values(vals, g, rule)))

    def verify_constants(self, rng=None, npoints=50, tol=1e-6):
        """Re-check R-bar, the Einstein condition and Weyl flatness pointwise."""
        rng = rng or np.random.default_rng(7)
        pts = self.sample_points(rng, npoints)
        pack = curvature(self.metric, self.chart, pts,
                         want_weyl=self.dim >= 3)
        out = {"scalar_dev": float(np.abs(pack.scalar - self.scalar_const).max())}
        if self.einstein_lambda is not None:
            out["einstein_dev"] = float(np.abs(
                pack.ricci - (self.dim - 1) * self.einstein_lambda * pack.g).max())
        if self.dim >= 3:
            out["weyl_norm"] = float(np.abs(pack.weyl_low).max())
        ok = out["scalar_dev"] < tol
        if self.einstein_lambda is not None:
            ok = ok and out["einstein_dev"] < tol
        if self.weyl_zero and self.dim >= 3:
            ok = ok and out["weyl_norm"] < tol
        out["ok"] = bool(ok)
        return out


def _omega_trig(nang, nvars, offset):
    """TrigPoly components of the unit vector omega(angles); angle axes start
    at ``offset`` within an nvars-dimensional chart."""
    T = TrigPoly
    if nang == 1:
        return [T.cos(offset, nvars), T.sin(offset, nvars)]
    if nang == 2:
        th, ph = offset, offset + 1
        return [T.sin(th, nvars) * T.cos(ph, nvars),
                T.sin(th, nvars) * T.sin(ph, nvars),
                T.cos(th, nvars)]
    if nang == 3:
        t1, t2, ph = offset, offset + 1, offset + 2
        return [T.sin(t1, nvars) * T.sin(t2, nvars) * T.cos(ph, nvars),
                T.sin(t1, nvars) * T.sin(t2, nvars) * T.sin(ph, nvars),
                T.sin(t1, nvars) * T.cos(t2, nvars),
                T.cos(t1, nvars)]
    raise ValueError("1..3 angles")


def _ball_emb_trig(nang):
    n = nang + 1
    return [TrigPoly.lin(0, n) * w for w in _omega_trig(nang, n, 1)]


def _sphere_emb_trig(nang, rho):
    n = nang + 1
    comps = [rho * (TrigPoly.sin(0, n, freq=1.0 / rho) * w)
             for w in _omega_trig(nang, n, 1)]
    comps.append(rho * TrigPoly.cos(0, n, freq=1.0 / rho))
    return comps


def _warped_metric_d1(sn, snp, nang):
    """Analytic d_e g_ab for dr^2 + sn(r)^2 * round angle metric."""
    def d1(pts):
        pts = np.atleast_2d(pts)
        m = len(pts)
        n = nang + 1
        out = np.zeros((m, n, n, n))
        s2 = sn(pts[:, 0]) ** 2
        ds2 = 2.0 * sn(pts[:, 0]) * snp(pts[:, 0])
        ang = _round_angle_metric(pts[:, 1:], nang)
        for a in range(nang):
            out[:, 0, 1 + a, 1 + a] = ds2 * ang[:, a]
        if nang >= 2:
            th1 = pts[:, 1]
            out[:, 1, 2, 2] = s2 * np.sin(2 * th1)
            if nang == 3:
                th2 = pts[:, 2]
                out[:, 1, 3, 3] = s2 * np.sin(2 * th1) * np.sin(th2) ** 2
                out[:, 2, 3, 3] = s2 * np.sin(th1) ** 2 * np.sin(2 * th2)
        return out
    return d1


def _polar_chart(radial_interval, nang, radial_singular_low, radial_singular_high=0.0):
    rows, per, sm = _angle_axes_spec(nang)
    box = [list(radial_interval)] + rows
    periodic = [False] + per
    margin = [[radial_singular_low, radial_singular_high]] + sm
    return Chart(box, periodic, margin)


def _warped_metric(sn, dsn_unused, nang):
    """dr^2 + sn(r)^2 * round angle metric, as a TensorField."""
    def fn(pts):
        m, n = pts.shape
        g = np.zeros((m, n, n))
        g[:, 0, 0] = 1.0
        rad = sn(pts[:, 0]) ** 2
        ang = _round_angle_metric(pts[:, 1:], nang)
        for a in range(nang):
            g[:, 1 + a, 1 + a] = rad * ang[:, a]
        return g
    return TensorField(2, fn, symmetric=True)


def _ball_normal_hooks(nang):
    def coords(pts):
        pts = np.atleast_2d(pts)
        w, _ = _omega(pts[:, 1:], nang)
        return pts[:, 0:1] * w

    def jac(pts):
        pts = np.atleast_2d(pts)
        w, dw = _omega(pts[:, 1:], nang)
        m, d = w.shape
        J = np.zeros((m, d, nang + 1))
        J[:, :, 0] = w
        J[:, :, 1:] = pts[:, 0:1, None] * dw
        return J
    return coords, jac


def _sphere_embedding_hooks(nang, rho):
    def emb(pts):
        pts = np.atleast_2d(pts)
        w, _ = _omega(pts[:, 1:], nang)
        r = pts[:, 0]
        return np.column_stack([rho * np.sin(r / rho)[:, None] * w,
                                rho * np.cos(r / rho)])

    def jac(pts):
        pts = np.atleast_2d(pts)
        w, dw = _omega(pts[:, 1:], nang)
        r = pts[:, 0]
        m, d = w.shape
        J = np.zeros((m, d + 1, nang + 1))
        J[:, :d, 0] = np.cos(r / rho)[:, None] * w
        J[:, d, 0] = -np.sin(r / rho)
        J[:, :d, 1:] = (rho * np.sin(r / rho))[:, None, None] * dw
        return J
    return emb, jac


def _radial_margin(extent):
    return min(0.05, 0.15 * extent)


def make_model(kind, n, quad_orders=None, **params):
    """Construct a catalog model; unsupported (kind, n) combinations are rejected."""
    if kind == "euclidean_ball":
        if n not in (2, 3):
            raise ValueError(f"euclidean_ball supports n in (2,3), got {n}")
        R = float(params.get("radius", 1.0))
        if R <= 0:
            raise ValueError("radius must be positive")
        nang = n - 1
        chart = _polar_chart([0.0, R], nang, _radial_margin(R))
        metric = _warped_metric(lambda r: r, None, nang)
        orders = quad_orders or ((18, 16) if n == 2 else (18, 12, 16))
        coords, jac = _ball_normal_hooks(nang)
        brk = 0.7 * R
        model = ManifoldModel(
            f"euclidean{n}_ball", kind, chart, metric, n, 0.0, 0.0, True, True,
            False, orders, {"radius": R},
            normal_coords=coords, normal_jacobian=jac,
            to_embedding=coords, embedding_jacobian=jac,
            quad_breaks={0: [brk]})
        model.sn = lambda r: r
        model.snp = lambda r: np.ones_like(r)
        model.support_break = brk
        model.emb_trig = _ball_emb_trig(nang)
        model.ball_trig = model.emb_trig
        model.metric_d1 = _warped_metric_d1(model.sn, model.snp, nang)
        model.boundary = make_surface(chart, R, orders[1:])
        return model

    if kind == "sphere":
        if n not in (2, 3, 4):
            raise ValueError(f"sphere supports n in (2,3,4), got {n}")
        rho = float(params.get("radius", 1.0))
        nang = n - 1
        chart = _polar_chart([0.0, np.pi * rho], nang, 0.05 * rho, 0.05 * rho)
        metric = _warped_metric(lambda r: rho * np.sin(r / rho), None, nang)
        lam = 1.0 / rho ** 2
        orders = quad_orders or _sphere_orders(n)
        emb, jac = _sphere_embedding_hooks(nang, rho)
        coords, njac = _ball_normal_hooks(nang)
        model = ManifoldModel(
            f"sphere{n}", kind, chart, metric, n, n * (n - 1) * lam, lam, True,
            True, True, orders, {"radius": rho},
            normal_coords=coords, normal_jacobian=njac,
            to_embedding=emb, embedding_jacobian=jac)
        model.emb_trig = _sphere_emb_trig(nang, rho)
        model.metric_d1 = _warped_metric_d1(lambda r: rho * np.sin(r / rho),
                                            lambda r: np.cos(r / rho), nang)
        return model

    if kind == "sphere_ball":
        if n != 3:
            raise ValueError("sphere_ball is built for n = 3")
        r0 = float(params.get("radius", 0.3))
        if not 0 < r0 < np.pi - 0.2:
            raise ValueError("sphere_ball radius must lie in (0, pi - margin)")
        nang = n - 1
        chart = _polar_chart([0.0, r0], nang, _radial_margin(r0))
        metric = _warped_metric(np.sin, None, nang)
        orders = quad_orders or (18, 12, 16)
        emb, jac = _sphere_embedding_hooks(nang, 1.0)
        coords, njac = _ball_normal_hooks(nang)
        brk = 0.7 * r0
        model = ManifoldModel(
            f"sphere{n}_ball", kind, chart, metric, n, n * (n - 1), 1.0, True,
            True, False, orders, {"radius": r0},
            normal_coords=coords, normal_jacobian=njac,
            to_embedding=emb, embedding_jacobian=jac,
            quad_breaks={0: [brk]})
        model.sn = np.sin
        model.snp = np.cos
        model.support_break = brk
        model.emb_trig = _sphere_emb_trig(nang, 1.0)
        model.ball_trig = _ball_emb_trig(nang)
        model.metric_d1 = _warped_metric_d1(np.sin, np.cos, nang)
        model.boundary = make_surface(chart, r0, orders[1:])
        return model

    if kind == "hyperbolic_ball":
        if n != 3:
            raise ValueError("hyperbolic_ball is built for n = 3")
        r0 = float(params.get("radius", 1.0))
        if r0 <= 0:
            raise ValueError("radius must be positive")
        nang = n - 1
        chart = _polar_chart([0.0, r0], nang, _radial_margin(r0))
        metric = _warped_metric(np.sinh, None, nang)
        orders = quad_orders or (18, 12, 16)
        coords, njac = _ball_normal_hooks(nang)
        brk = 0.7 * r0
        model = ManifoldModel(
            f"hyperbolic{n}_ball", kind, chart, metric, n, -n * (n - 1), -1.0,
            True, True, False, orders, {"radius": r0},
            normal_coords=coords, normal_jacobian=njac,
            to_embedding=coords, embedding_jacobian=njac,
            quad_breaks={0: [brk]})
        model.sn = np.sinh
        model.snp = np.cosh
        model.support_break = brk
        model.emb_trig = _ball_emb_trig(nang)
        model.ball_trig = model.emb_trig
        model.metric_d1 = _warped_metric_d1(np.sinh, np.cosh, nang)
        model.boundary = make_surface(chart, r0, orders[1:])
        return model

    if kind == "torus":
        if n not in (2, 3):
            raise ValueError(f"torus supports n in (2,3), got {n}")
        L = float(params.get("side", 2 * np.pi))
        chart = Chart([[0.0, L]] * n, periodic=[True] * n)
        eye = np.eye(n)
        metric = TensorField(2, lambda p: np.broadcast_to(eye, (len(p), n, n)).copy(),
                             symmetric=True)
        orders = quad_orders or ((12,) * n)
        center = np.full(n, L / 2)
        model = ManifoldModel(
            f"torus{n}", kind, chart, metric, n, 0.0, 0.0, True, True, True,
            orders, {"side": L},
            normal_coords=lambda p: np.atleast_2d(p) - center,
            normal_jacobian=lambda p: np.broadcast_to(eye, (len(np.atleast_2d(p)), n, n)).copy(),
            to_embedding=lambda p: np.atleast_2d(p) - center,
            embedding_jacobian=lambda p: np.broadcast_to(eye, (len(np.atleast_2d(p)), n, n)).copy())
        model.emb_trig = [TrigPoly.lin(a, n) + TrigPoly.const(-L / 2, n) for a in range(n)]
        model.metric_d1 = lambda p: np.zeros((len(np.atleast_2d(p)), n, n, n))
        return model

    if kind == "sphere_product":
        if n != 4:
            raise ValueError("sphere_product is the S2 x S2 model, n = 4")
        rho = float(params.get("radius", 1.0))
        rows1, per1, sm1 = _angle_axes_spec(2)
        box = rows1 + rows1
        periodic = per1 + per1
        margins = sm1 + sm1
        chart = Chart(box, periodic, margins)

        def fn(pts):
            m = len(pts)
            g = np.zeros((m, 4, 4))
            a1 = _round_angle_metric(pts[:, 0:2], 2)
            a2 = _round_angle_metric(pts[:, 2:4], 2)
            g[:, 0, 0] = rho ** 2 * a1[:, 0]
            g[:, 1, 1] = rho ** 2 * a1[:, 1]
            g[:, 2, 2] = rho ** 2 * a2[:, 0]
            g[:, 3, 3] = rho ** 2 * a2[:, 1]
            return g
        metric = TensorField(2, fn, symmetric=True)
        lam = 1.0 / (3.0 * rho ** 2)

        def emb(pts):
            pts = np.atleast_2d(pts)
            w1, _ = _omega(pts[:, 0:2], 2)
            w2, _ = _omega(pts[:, 2:4], 2)
            return np.column_stack([rho * w1, rho * w2])

        def jac(pts):
            pts = np.atleast_2d(pts)
            w1, dw1 = _omega(pts[:, 0:2], 2)
            w2, dw2 = _omega(pts[:, 2:4], 2)
            m = len(pts)
            J = np.zeros((m, 6, 4))
            J[:, 0:3, 0:2] = rho * dw1
            J[:, 3:6, 2:4] = rho * dw2
            return J
        orders = quad_orders or (8, 10, 8, 10)
        model = ManifoldModel(
            "s2xs2", kind, chart, metric, 4, 4.0 / rho ** 2, lam, False, False,
            True, orders, {"radius": rho},
            to_embedding=emb, embedding_jacobian=jac)
        model.emb_trig = ([rho * w for w in _omega_trig(2, 4, 0)]
                          + [rho * w for w in _omega_trig(2, 4, 2)])

        def _prod_d1(pts):
            pts = np.atleast_2d(pts)
            out = np.zeros((len(pts), 4, 4, 4))
            out[:, 0, 1, 1] = rho ** 2 * np.sin(2 * pts[:, 0])
            out[:, 2, 3, 3] = rho ** 2 * np.sin(2 * pts[:, 2])
            return out
        model.metric_d1 = _prod_d1
        return model

    raise ValueError(f"unsupported model kind {kind!r}")


def _sphere_orders(n):
    return {2: (12, 16), 3: (14, 12, 20), 4: (10, 8, 8, 12)}[n]


_CATALOG = {
    "euclidean2_ball": ("euclidean_ball", 2),
    "euclidean3_ball": ("euclidean_ball", 3),
    "sphere2": ("sphere", 2),
    "sphere3": ("sphere", 3),
    "sphere4": ("sphere", 4),
    "sphere3_ball": ("sphere_ball", 3),
    "hyperbolic3_ball": ("hyperbolic_ball", 3),
    "torus2": ("torus", 2),
    "torus3": ("torus", 3),
    "s2xs2": ("sphere_product", 4),
}


def catalog_names():
    return sorted(_CATALOG)


def resolve_model(spec):
    """Model from a catalog string like 'sphere3' or 'euclidean3_ball:r=1'."""
    name, _, rest = spec.partition(":")
    if name not in _CATALOG:
        raise KeyError(f"unknown model {name!r}; known: {', '.join(catalog_names())}")
    kind, n = _CATALOG[name]
    params = {}
    if rest:
        for item in rest.split(","):
            k, _, v = item.partition("=")
            k = {"r": "radius", "L": "side"}.get(k.strip(), k.strip())
            params[k] = float(v)
    return make_model(kind, n, **params)


# ---------------------------------------------------------------------------
# static potentials


class VStaticPotential:
    """A certified (f, kappa) pair for a space-form model."""

    def __init__(self, model, f, kappa, note, a, b):
        self.model_name = model.name
        self.f = f
        self.kappa = float(kappa)
        self.note = note
        self.a, self.b = float(a), float(b)

    def __repr__(self):
        return f"VStaticPotential({self.model_name}, a={self.a}, b={self.b}, kappa={self.kappa})"

    def f_range(self, model):
        vals = self.f.evaluate(model.quadrature.nodes)
        return float(vals.min()), float(vals.max())


def vstatic_residuals(model, f, kappa, points, scheme=FDScheme()):
    """Pointwise residuals of the static equation and of its trace."""
    pts = np.atleast_2d(points)
    n = model.dim
    pack = curvature(model.metric, model.chart, pts, want_weyl=False)
    hess = hessian_scalar(f, model.metric, model.chart, pts, scheme)
    lap = np.einsum("mab,mab->m", pack.ginv, hess)
    fv = f.evaluate(pts)
    res1 = (hess - pack.g * lap[:, None, None] - fv[:, None, None] * pack.ricci
            - kappa * pack.g)
    res2 = lap + model.scalar_const * fv / (n - 1) + n * kappa / (n - 1)
    return np.abs(res1).max(axis=(1, 2)), np.abs(res2)


def make_vstatic(model, a, b, certify_points=100, seed=202, tol=1e-6):
    """Potential f with its kappa on a space-form model, certified by residuals.

    sphere family:      f = a + b cos(r/rho),  kappa = -(n-1) lam a
    hyperbolic family:  f = a + b cosh(r),     kappa = +(n-1) a
    euclidean family:   f = a + b r^2,         kappa = -2(n-1) b
    flat torus:         f = a (b must vanish), kappa = 0
    """
    if not model.space_form:
        raise PreconditionError(f"{model.name} is not a space form")
    n = model.dim
    if model.kind in ("sphere", "sphere_ball"):
        rho = model.params.get("radius", 1.0) if model.kind == "sphere" else 1.0
        lam = 1.0 / rho ** 2
        f = ScalarField(lambda p, a=a, b=b: a + b * np.cos(np.atleast_2d(p)[:, 0] / rho))
        kappa = -(n - 1) * lam * a
        note = "f > 0 where a + b cos(r/rho) > 0"
    elif model.kind == "hyperbolic_ball":
        f = ScalarField(lambda p, a=a, b=b: a + b * np.cosh(np.atleast_2d(p)[:, 0]))
        kappa = (n - 1) * a
        note = "f > 0 where a + b cosh r > 0"
    elif model.kind == "euclidean_ball":
        f = ScalarField(lambda p, a=a, b=b: a + b * np.atleast_2d(p)[:, 0] ** 2)
        kappa = -2 * (n - 1) * b
        note = "f > 0 where a + b r^2 > 0"
    elif model.kind == "torus":
        if b != 0:
            raise PreconditionError("flat torus admits constant potentials only (b = 0)")
        f = ScalarField(lambda p, a=a: np.full(len(np.atleast_2d(p)), a))
        kappa = 0.0
        note = "constant potential"
    else:
        raise PreconditionError(f"no potential family for kind {model.kind!r}")
    rng = np.random.default_rng(seed)
    pts = model.sample_points(rng, certify_points)
    r1, r2 = vstatic_residuals(model, f, kappa, pts)
    if r1.max() > tol or r2.max() > tol:
        raise PreconditionError(
            f"potential certification failed on {model.name}: "
            f"static residual {r1.max():.2e}, trace residual {r2.max():.2e} "
            "(signals a convention bug)")
    return VStaticPotential(model, f, kappa, note, a, b)


# ---------------------------------------------------------------------------
# perturbations


PERTURBATION_FAMILIES = ("airy2d", "double_curl3d", "bump_tensor",
                         "boundary_adapted", "conformal", "tt_wave_torus",
                         "ambient_poly")


class Perturbation:
    """Symmetric 2-tensor field with numerically verified structural flags."""

    def __init__(self, h, model, family, params, seed, flags, residuals):
        self.h = h
        self.model_name = model.name
        self.family = family
        self.params = params
        self.seed = seed
        self.tangentially_vanishing = flags.get("tangentially_vanishing", False)
        self.divergence_free = flags.get("divergence_free", False)
        self.traceless = flags.get("traceless", False)
        self.compact_support = flags.get("compact_support", False)
        self.flag_residuals = residuals

    def __repr__(self):
        on = [k for k in ("tangentially_vanishing", "divergence_free",
                          "traceless", "compact_support") if getattr(self, k)]
        return f"Perturbation({self.family}@{self.model_name}, seed={self.seed}, flags={on})"


def _random_poly(rng, nvars, degree, scale=1.0):
    p = Poly(nvars)
    for total in range(degree + 1):
        for e in _exponents(nvars, total):
            p = p + Poly(nvars, {e: scale * rng.standard_normal()})
    return p


def _exponents(nvars, total):
    if nvars == 1:
        yield (total,)
        return
    for k in range(total + 1):
        for rest in _exponents(nvars - 1, total - k):
            yield (k,) + rest


def _pullback_field(model, ambient_fn, use_embedding=True):
    """Chart components of an ambient covariant 2-tensor field."""
    J = model.embedding_jacobian if use_embedding else model.normal_jacobian
    E = model.to_embedding if use_embedding else model.normal_coords

    def fn(pts):
        pts = np.atleast_2d(pts)
        Jv = J(pts)
        H = ambient_fn(E(pts))
        return np.einsum("mia,mjb,mij->mab", Jv, Jv, H)
    return TensorField(2, fn, symmetric=True)


def _chordal_bump(model, rho, k, center_chart):
    E0 = model.to_embedding(np.asarray(center_chart)[None, :])[0]

    def b(y):
        q = np.sum((y - E0) ** 2, axis=1) / rho ** 2
        out = np.zeros(len(y))
        inside = q < 1.0 - 1e-14
        if np.any(inside):
            out[inside] = np.exp(1.0 - 1.0 / (1.0 - q[inside]))
        return out
    return b


def _normalize(model, fld):
    nrm = model.l2_norm_tensor(fld)
    if nrm == 0:
        raise PreconditionError("generated perturbation vanished identically")
    return (1.0 / nrm) * fld, nrm


def _verify_flags(model, h, want, seed):
    """Numerically check every requested flag; returns measured residuals."""
    res = {}
    rng = np.random.default_rng(seed + 91)
    if want.get("tangentially_vanishing"):
        surf = model.boundary
        if surf is None:
            raise PreconditionError("tangential vanishing needs a boundary model")
        bp = surf.sample_points(rng, 16)
        fr = adapted_frame(surf, model.metric, bp)
        hv = h.evaluate(bp)
        tang = fr[:, :-1]
        comp = np.einsum("mia,mjb,mab->mij", tang, tang, hv)
        res["tangential"] = float(np.abs(comp).max())
        if res["tangential"] > 1e-10:
            raise PreconditionError(
                f"tangential components reach {res['tangential']:.2e} > 1e-10")
    if want.get("divergence_free"):
        rule = model.quadrature
        dv = divergence(h, model.metric, model.chart, rule.nodes)
        g = model.metric.evaluate(rule.nodes)
        nrm2 = tensor_norm2(dv, np.linalg.inv(g))
        res["divergence"] = float(np.sqrt(integrate_values(nrm2, g, rule)))
        if res["divergence"] > 1e-8:
            raise PreconditionError(
                f"divergence L2 norm {res['divergence']:.2e} > 1e-8")
    if want.get("traceless"):
        g = model.metric.evaluate(model.quadrature.nodes)
        tr = trace(h.evaluate(model.quadrature.nodes), np.linalg.inv(g))
        res["trace"] = float(np.abs(tr).max())
        if res["trace"] > 1e-10:
            raise PreconditionError(f"|tr h| reaches {res['trace']:.2e} > 1e-10")
    if want.get("compact_support"):
        if h.support is None:
            raise PreconditionError("compact support flag without a support box")
        band = model.chart.box
        inside = np.all(h.support[:, 0] >= band[:, 0]) and np.all(h.support[:, 1] <= band[:, 1])
        strict = h.support[0, 1] < band[0, 1]  # radial (or first-axis) strictness
        if not (inside and strict):
            raise PreconditionError("support box is not strictly interior")
        res["support_gap"] = float(band[0, 1] - h.support[0, 1])
    return res


def make_perturbation(model, family, params=None, seed=0):
    """Seeded perturbation from a named family, flags verified at construction.

    Generated fields are normalized to unit L2 norm against the background
    volume element.
    """
    params = dict(params or {})
    rng = np.random.default_rng(seed)
    n = model.dim

    if family == "airy2d":
        if model.kind != "euclidean_ball" or n != 2:
            raise PreconditionError("airy2d needs the flat 2-ball")
        R = model.params["radius"]
        rho = params.get("rho", 0.7) * R
        k = int(params.get("smoothness", 8))
        deg = int(params.get("degree", 2))
        psi = BumpPoly(k, _random_poly(rng, 2, deg), rho)
        hxx = psi.diff(1).diff(1)
        hyy = psi.diff(0).diff(0)
        hxy = -1.0 * psi.diff(0).diff(1)
        coords, jac = model.normal_coords, model.normal_jacobian

        def fn(pts):
            y = coords(pts)
            J = jac(pts)
            vals = eval_bump_stack([hxx, hyy, hxy], y)
            H = np.empty((len(y), 2, 2))
            H[:, 0, 0] = vals[:, 0]
            H[:, 1, 1] = vals[:, 1]
            H[:, 0, 1] = H[:, 1, 0] = vals[:, 2]
            return np.einsum("mia,mjb,mij->mab", J, J, H)
        support = np.array([[0.0, rho], list(model.chart.box[1])])
        h = TensorField(2, fn, symmetric=True, support=support)
        want = {"divergence_free": True, "compact_support": True,
                "tangentially_vanishing": True}

    elif family == "double_curl3d":
        if model.kind != "euclidean_ball" or n != 3:
            raise PreconditionError("double_curl3d needs the flat 3-ball")
        R = model.params["radius"]
        rho = params.get("rho", 0.7) * R
        k = int(params.get("smoothness", 8))
        deg = int(params.get("degree", 1))
        S = [[None] * 3 for _ in range(3)]
        for i in range(3):
            for j in range(i, 3):
                S[i][j] = S[j][i] = BumpPoly(k, _random_poly(rng, 3, deg), rho)
        eps = np.zeros((3, 3, 3))
        for i, j, k2 in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
            eps[i, j, k2] = 1.0
            eps[i, k2, j] = -1.0
        comps = {}
        for i in range(3):
            for j in range(i, 3):
                terms = None
                for a in range(3):
                    for b in range(3):
                        if eps[i, a, b] == 0:
                            continue
                        for c in range(3):
                            for d in range(3):
                                if eps[j, c, d] == 0:
                                    continue
                                t = (eps[i, a, b] * eps[j, c, d]) * S[b][d].diff(a).diff(c)
                                terms = t if terms is None else terms + t
                comps[(i, j)] = terms
        coords, jac = model.normal_coords, model.normal_jacobian
        comp_list = [comps[(i, j)] for i in range(3) for j in range(i, 3)]
        pairs = [(i, j) for i in range(3) for j in range(i, 3)]

        def fn(pts):
            y = coords(pts)
            J = jac(pts)
            vals = eval_bump_stack(comp_list, y)
            H = np.empty((len(y), 3, 3))
            for k2, (i, j) in enumerate(pairs):
                H[:, i, j] = H[:, j, i] = vals[:, k2]
            return np.einsum("mia,mjb,mij->mab", J, J, H)
        support = np.vstack([[0.0, rho], model.chart.box[1:]])
        h = TensorField(2, fn, symmetric=True, support=support)
        want = {"divergence_free": True, "compact_support": True,
                "tangentially_vanishing": True}

    elif family == "bump_tensor":
        k = int(params.get("smoothness", 6))
        if model.closed:
            rho = params.get("rho", 0.8)
            center = params.get("center")
            if center is None:
                center = model.chart.box.mean(axis=1)
            bump = _chordal_bump(model, rho, k, center)
            M = rng.standard_normal((model.to_embedding(
                model.chart.box.mean(axis=1)[None, :]).shape[1],) * 2)
            M = 0.5 * (M + M.T)

            def amb(y, M=M, bump=bump):
                return bump(y)[:, None, None] * M
            h = _pullback_field(model, amb)
            want = {}
        else:
            R = model.chart.box[0, 1]
            frac = params.get("rho", 0.7)
            rho = frac * R
            k = int(params.get("smoothness", 8))
            M = rng.standard_normal((n, n))
            M = 0.5 * (M + M.T)
            B = BumpPoly(k, _random_poly(rng, n, int(params.get("degree", 1))), rho)
            coords, jac = model.normal_coords, model.normal_jacobian

            def fn(pts, M=M, B=B):
                y = coords(pts)
                J = jac(pts)
                H = B(y)[:, None, None] * M
                return np.einsum("mia,mjb,mij->mab", J, J, H)
            if frac < 1.0:
                support = np.vstack([[0.0, rho], model.chart.box[1:]])
                h = TensorField(2, fn, symmetric=True, support=support)
                want = {"compact_support": True, "tangentially_vanishing": True}
            else:
                # support edge sits on the boundary: a polynomial field on the
                # whole ball, vanishing at the boundary to order k
                h = TensorField(2, fn, symmetric=True)
                want = {"tangentially_vanishing": True}

    elif family == "boundary_adapted":
        if model.boundary is None:
            raise PreconditionError("boundary_adapted needs a ball model")
        d = model.to_embedding(model.chart.box.mean(axis=1)[None, :]).shape[1]
        v_omega = rng.standard_normal(d)
        v_phi = rng.standard_normal(d) * 0.5
        v_psi = rng.standard_normal(d) * 0.5
        c_phi, c_psi = rng.standard_normal(2)
        E, J = model.to_embedding, model.embedding_jacobian
        sn = model.sn

        def fn(pts):
            # h = phi (rho x omega + omega x rho) + psi rho x rho with
            # rho = sn(r) dr = d(radial potential): smooth through the pole
            pts2 = np.atleast_2d(pts)
            y = E(pts2)
            Jv = J(pts2)
            omega = np.einsum("mia,i->ma", Jv, v_omega)       # d(l1 o E)
            phi = c_phi + y @ v_phi
            psi = c_psi + y @ v_psi
            m = len(pts2)
            rhoc = np.zeros((m, n))
            rhoc[:, 0] = sn(pts2[:, 0])
            H = (phi[:, None, None] * (rhoc[:, :, None] * omega[:, None, :]
                                       + omega[:, :, None] * rhoc[:, None, :])
                 + psi[:, None, None] * rhoc[:, :, None] * rhoc[:, None, :])
            return H
        h = TensorField(2, fn, symmetric=True)
        want = {"tangentially_vanishing": True}

    elif family == "conformal":
        if model.kind == "torus":
            L = model.params["side"]
            c = rng.standard_normal(2 * n + 1) * 0.5

            def phi_fn(pts, c=c):
                pts2 = np.atleast_2d(pts)
                out = np.full(len(pts2), c[0])
                for a in range(n):
                    out += c[1 + 2 * a] * np.cos(2 * np.pi * pts2[:, a] / L)
                    out += c[2 + 2 * a] * np.sin(2 * np.pi * pts2[:, a] / L)
                return out
        else:
            d = model.to_embedding(model.chart.box.mean(axis=1)[None, :]).shape[1]
            v = rng.standard_normal(d)
            c0 = rng.standard_normal()
            E = model.to_embedding

            def phi_fn(pts, v=v, c0=c0):
                return c0 + E(np.atleast_2d(pts)) @ v
        phi_amp = params.get("amplitude")
        gbar = model.metric

        def fn(pts):
            return phi_fn(pts)[:, None, None] * gbar.evaluate(np.atleast_2d(pts))
        h = TensorField(2, fn, symmetric=True)
        if phi_amp is not None:
            h = float(phi_amp) * h
        want = {}

    elif family == "tt_wave_torus":
        if model.kind != "torus":
            raise PreconditionError("tt_wave_torus needs a torus model")
        L = model.params["side"]
        kvec = np.asarray(params.get("k", None) if params.get("k") is not None
                          else _random_lattice_vector(rng, n), dtype=float)
        sigma = params.get("sigma")
        if sigma is None:
            sigma = _random_tt_matrix(rng, kvec, n)
        sigma = np.asarray(sigma, dtype=float)
        if np.abs(kvec @ sigma).max() > 1e-13 or abs(np.trace(sigma)) > 1e-13:
            raise PreconditionError("tt wave data must satisfy k.sigma = 0 and tr sigma = 0")
        omega = 2 * np.pi / L

        def fn(pts, kvec=kvec, sigma=sigma):
            pts2 = np.atleast_2d(pts)
            phase = np.cos(omega * pts2 @ kvec)
            return phase[:, None, None] * sigma
        h = TensorField(2, fn, symmetric=True)
        want = {"divergence_free": True, "traceless": True}

    elif family == "ambient_poly":
        if not model.closed:
            raise PreconditionError("ambient_poly generates fields on closed models")
        if model.kind == "torus":
            L = model.params["side"]
            cc = rng.standard_normal((n, n, 1 + 2 * n)) * 0.5
            cc = 0.5 * (cc + cc.transpose(1, 0, 2))

            def fn(pts, cc=cc):
                pts2 = np.atleast_2d(pts)
                m = len(pts2)
                H = np.broadcast_to(cc[:, :, 0], (m, n, n)).copy()
                for a in range(n):
                    ca = np.cos(2 * np.pi * pts2[:, a] / L)
                    sa = np.sin(2 * np.pi * pts2[:, a] / L)
                    H += ca[:, None, None] * cc[:, :, 1 + 2 * a]
                    H += sa[:, None, None] * cc[:, :, 2 + 2 * a]
                return H
            h = TensorField(2, fn, symmetric=True)
        else:
            deg = int(params.get("degree", 2))
            d = model.to_embedding(model.chart.box.mean(axis=1)[None, :]).shape[1]
            polys = [[None] * d for _ in range(d)]
            for i in range(d):
                for j in range(i, d):
                    polys[i][j] = polys[j][i] = _random_poly(rng, d, deg, 0.5)

            def amb(y, polys=polys, d=d):
                m = len(y)
                H = np.empty((m, d, d))
                for i in range(d):
                    for j in range(i, d):
                        H[:, i, j] = H[:, j, i] = polys[i][j](y)
                return H
            h = _pullback_field(model, amb)
        want = {}

    else:
        raise ValueError(f"unknown perturbation family {family!r}; "
                         f"known: {', '.join(PERTURBATION_FAMILIES)}")

    h, _ = _normalize(model, h)
    residuals = _verify_flags(model, h, want, seed)
    return Perturbation(h, model, family, params, seed, want, residuals)


def _random_lattice_vector(rng, n):
    while True:
        k = rng.integers(-2, 3, size=n)
        if np.any(k != 0):
            return k.astype(float)


def _random_tt_matrix(rng, kvec, n):
    """Random symmetric sigma with k.sigma = 0 and tr sigma = 0."""
    khat = kvec / np.linalg.norm(kvec)
    proj = np.eye(n) - np.outer(khat, khat)
    M = rng.standard_normal((n, n))
    M = 0.5 * (M + M.T)
    sig = proj @ M @ proj
    sig -= (np.trace(sig) / np.trace(proj @ proj)) * (proj @ proj)
    return sig


def c1_norm(model, h, seed=0, npoints=200):
    """max over seeded samples of |h| + |nabla h| in background frame norms."""
    rng = np.random.default_rng(seed + 1021)
    pts = model.sample_points(rng, npoints)
    if model.boundary is not None:
        pts = np.vstack([pts, model.boundary.sample_points(rng, 40)])
    g = model.metric.evaluate(pts)
    ginv = np.linalg.inv(g)
    hv = h.evaluate(pts)
    nab = covariant_derivative(h, model.metric, model.chart, pts)
    n0 = np.sqrt(tensor_norm2(hv, ginv))
    n1 = np.sqrt(tensor_norm2(nab, ginv))
    return float((n0 + n1).max())
