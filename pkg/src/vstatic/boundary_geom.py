"""Geometry of coordinate-sphere boundaries: frames, second fundamental form,
mean curvature, boundary quadrature.

A hypersurface here is always a level set ``r = r0`` of the radial axis of a
polar chart.  The second fundamental form is computed as half the Lie
derivative of the metric along the (metric-dependent) unit normal extension
``nu = grad r / |grad r|_g``, restricted to the tangent frame; this needs only
first derivatives of the metric, so it stays cheap and accurate for perturbed
metrics along oracle paths.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .chart_core import (Chart, FDScheme, QuadratureRule, TensorField,
                         build_jet_plan, build_quadrature)

__all__ = [
    "Hypersurface",
    "make_surface",
    "adapted_frame",
    "second_fundamental_form",
    "mean_curvature",
    "mean_curvature_from_jets",
    "normal_jets",
    "boundary_integrate",
    "induced_metric",
]


@dataclass(frozen=True)
class Hypersurface:
    """Coordinate sphere r = radius, outward oriented, with its own quadrature."""

    chart: Chart                  # ambient chart
    radius: float
    radial_axis: int
    induced_chart: Chart          # angular axes only
    quadrature: QuadratureRule    # rule on the induced chart

    @property
    def angular_axes(self):
        return [a for a in range(self.chart.dim) if a != self.radial_axis]

    def ambient_points(self, angular_points):
        ap = np.atleast_2d(np.asarray(angular_points, dtype=float))
        pts = np.empty((len(ap), self.chart.dim))
        pts[:, self.radial_axis] = self.radius
        for k, a in enumerate(self.angular_axes):
            pts[:, a] = ap[:, k]
        return pts

    def nodes(self):
        """Quadrature nodes lifted to the ambient chart."""
        return self.ambient_points(self.quadrature.nodes)

    def sample_points(self, rng, count, margin=None):
        return self.ambient_points(self.induced_chart.sample_points(rng, count, margin))


def make_surface(chart, radius, orders, radial_axis=0):
    lo, hi = chart.box[radial_axis]
    if not (lo < radius <= hi):
        raise ValueError(f"surface radius {radius} outside the radial interval ({lo}, {hi}]")
    angular = [a for a in range(chart.dim) if a != radial_axis]
    induced = chart.subchart(angular)
    rule = build_quadrature(induced, orders)
    return Hypersurface(chart, float(radius), radial_axis, induced, rule)


def adapted_frame(surface, metric, points):
    """Orthonormal frame (e_1..e_{n-1} tangent, e_n outward normal) at points.

    Gram-Schmidt over the angular coordinate tangents in fixed axis order,
    radial direction last; never reorders.  Returns (m, n, n) with
    ``frame[:, k, :]`` the components of the k-th vector.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    g = metric.evaluate(pts) if isinstance(metric, TensorField) else np.asarray(metric)
    m, n = pts.shape[0], surface.chart.dim
    order = surface.angular_axes + [surface.radial_axis]
    frame = np.zeros((m, n, n))
    for k, axis in enumerate(order):
        v = np.zeros((m, n))
        v[:, axis] = 1.0
        for j in range(k):
            proj = np.einsum("mab,ma,mb->m", g, frame[:, j], v)
            v -= proj[:, None] * frame[:, j]
        nrm2 = np.einsum("mab,ma,mb->m", g, v, v)
        if np.any(nrm2 <= 0):
            raise ValueError("degenerate tangent basis during Gram-Schmidt")
        frame[:, k] = v / np.sqrt(nrm2)[:, None]
    return frame


def normal_jets(g, dg, radial_axis):
    """Unit-normal components and coordinate derivatives from metric jets.

    nu^mu = g^{mu r}/sqrt(g^{rr}); both nu and d nu are algebraic in (g, dg).
    """
    ginv = np.linalg.inv(g)
    dginv = -np.einsum("mci,meij,mjd->mecd", ginv, dg, ginv)
    r = radial_axis
    G = ginv[:, :, r]
    dG = dginv[:, :, :, r]
    s = np.sqrt(ginv[:, r, r])
    ds = dginv[:, :, r, r] / (2 * s[:, None])
    nu = G / s[:, None]
    dnu = dG / s[:, None, None] - G[:, None, :] * (ds / s[:, None] ** 2)[:, :, None]
    return nu, dnu


def _lie_normal(g, dg, radial_axis):
    nu, dnu = normal_jets(g, dg, radial_axis)
    lie = (np.einsum("mc,mcab->mab", nu, dg)
           + np.einsum("mcb,mac->mab", g, dnu)
           + np.einsum("mac,mbc->mab", g, dnu))
    return lie


def second_fundamental_form(surface, metric, points, scheme=FDScheme()):
    """(A, H): second fundamental form in the adapted frame and its trace.

    Valid for arbitrary (perturbed) positive-definite metrics; this is the
    nonlinear A(g), H(g) that the finite-difference oracle differentiates.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    plan = build_jet_plan(surface.chart, pts, scheme, order=1)
    jets = plan.evaluate(metric)
    g = jets[()]
    dg = np.stack([jets[(a,)] for a in range(surface.chart.dim)], axis=1)
    lie = _lie_normal(g, dg, surface.radial_axis)
    frame = adapted_frame(surface, g, pts)
    tang = frame[:, :-1]                      # (m, n-1, n)
    A = 0.5 * np.einsum("mia,mjb,mab->mij", tang, tang, lie)
    H = np.einsum("mii->m", A)
    return A, H


def mean_curvature_from_jets(g, dg, radial_axis, angular_axes):
    """H from first-order metric jets, traced with the induced metric."""
    lie = _lie_normal(g, dg, radial_axis)
    gi = g[:, angular_axes][:, :, angular_axes]
    li = lie[:, angular_axes][:, :, angular_axes]
    return 0.5 * np.einsum("mab,mab->m", np.linalg.inv(gi), li)


def mean_curvature(surface, metric, points, scheme=FDScheme()):
    """H(g) at boundary points via the induced-metric trace (frame-free path)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    plan = build_jet_plan(surface.chart, pts, scheme, order=1)
    jets = plan.evaluate(metric)
    g = jets[()]
    dg = np.stack([jets[(a,)] for a in range(surface.chart.dim)], axis=1)
    return mean_curvature_from_jets(g, dg, surface.radial_axis, surface.angular_axes)


def induced_metric(surface, metric, angular_points=None):
    """Induced metric components on the angular axes at boundary nodes."""
    ap = surface.quadrature.nodes if angular_points is None else angular_points
    pts = surface.ambient_points(ap)
    g = metric.evaluate(pts)
    return g[:, surface.angular_axes][:, :, surface.angular_axes]


def boundary_integrate(fld, metric, surface):
    """Integral over the surface with the induced-metric area element."""
    nodes = surface.nodes()
    vals = fld.evaluate(nodes) if isinstance(fld, TensorField) else np.asarray(fld)
    gi = induced_metric(surface, metric)
    dens = np.sqrt(np.linalg.det(gi)) if gi.shape[-1] > 1 else np.sqrt(gi[:, 0, 0])
    return float(np.dot(surface.quadrature.weights, vals * dens))
