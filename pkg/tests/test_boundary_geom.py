import numpy as np
import pytest

from vstatic.boundary_geom import (adapted_frame, boundary_integrate,
                                   make_surface, mean_curvature,
                                   second_fundamental_form)
from vstatic.chart_core import ScalarField, TensorField
from vstatic.model_spaces import make_perturbation

from conftest import cached_model


def ones_field():
    return ScalarField(lambda p: np.ones(len(p)))


def test_flat_ball_boundary(euclidean3_ball, rng):
    surf = euclidean3_ball.boundary
    pts = surf.sample_points(rng, 10)
    A, H = second_fundamental_form(surf, euclidean3_ball.metric, pts)
    np.testing.assert_allclose(H, 2.0, atol=1e-9)
    assert np.abs(A - np.eye(2)).max() < 1e-9
    area = boundary_integrate(ones_field(), euclidean3_ball.metric, surf)
    assert abs(area - 4 * np.pi) < 1e-9


def test_flat_2ball_circle(euclidean2_ball, rng):
    surf = euclidean2_ball.boundary
    pts = surf.sample_points(rng, 6)
    fr = adapted_frame(surf, euclidean2_ball.metric, pts)
    g = euclidean2_ball.metric.evaluate(pts)
    gram = np.einsum("mia,mjb,mab->mij", fr, fr, g)
    assert np.abs(gram - np.eye(2)).max() < 1e-10
    circ = boundary_integrate(ones_field(), euclidean2_ball.metric, surf)
    assert abs(circ - 2 * np.pi) < 1e-12


def test_geodesic_spheres(sphere3, rng):
    for r0 in (0.3, 0.2, 0.1):
        surf = make_surface(sphere3.chart, r0, (10, 12))
        pts = surf.sample_points(rng, 8)
        _, H = second_fundamental_form(surf, sphere3.metric, pts)
        np.testing.assert_allclose(H, 2 / np.tan(r0), atol=1e-6)
        area = boundary_integrate(ones_field(), sphere3.metric, surf)
        assert abs(area - 4 * np.pi * np.sin(r0) ** 2) < 1e-8


def test_hyperbolic_sphere(hyperbolic3_ball, rng):
    surf = hyperbolic3_ball.boundary
    r0 = surf.radius
    pts = surf.sample_points(rng, 8)
    _, H = second_fundamental_form(surf, hyperbolic3_ball.metric, pts)
    np.testing.assert_allclose(H, 2 / np.tanh(r0), atol=1e-6)


def test_frame_orthonormal_for_perturbed_metric(sphere3_ball, rng):
    surf = sphere3_ball.boundary
    h = make_perturbation(sphere3_ball, "boundary_adapted", seed=4)
    g = sphere3_ball.metric + 0.05 * h.h
    pts = surf.sample_points(rng, 8)
    fr = adapted_frame(surf, g, pts)
    gv = g.evaluate(pts)
    gram = np.einsum("mia,mjb,mab->mij", fr, fr, gv)
    assert np.abs(gram - np.eye(3)).max() < 1e-8
    # normal is outward: positive radial component
    assert (fr[:, -1, 0] > 0).all()


def test_mean_curvature_matches_trace_for_perturbed_metrics(sphere3_ball, rng):
    surf = sphere3_ball.boundary
    pts = surf.sample_points(rng, 5)
    for seed in range(20):
        h = make_perturbation(sphere3_ball, "boundary_adapted", seed=seed)
        g = sphere3_ball.metric + 0.03 * h.h
        A, H = second_fundamental_form(surf, g, pts)
        H2 = mean_curvature(surf, g, pts)
        assert np.abs(np.einsum("mii->m", A) - H2).max() < 1e-8
        assert np.abs(H - H2).max() < 1e-8


def test_small_radius_expansions(sphere3):
    # |H - (n-1)/r| <= C r with a stable fitted constant
    radii = [0.2, 0.1, 0.05]
    rng = np.random.default_rng(3)
    cs = []
    for r in radii:
        surf = make_surface(sphere3.chart, r, (8, 10))
        pts = surf.sample_points(rng, 6)
        A, H = second_fundamental_form(surf, sphere3.metric, pts)
        cs.append(np.abs(H - 2 / r).max() / r)
        gi = np.eye(2) / r
        dev = np.abs(A - np.eye(2) / r).max() / r
        assert dev < 1.0
    cs = np.array(cs)
    assert cs.max() < 1.0 and cs.max() / max(cs.min(), 1e-6) < 3.0


def test_odd_function_integrates_to_zero(euclidean3_ball):
    surf = euclidean3_ball.boundary
    odd = ScalarField(lambda p: np.sin(p[:, 2]))
    val = boundary_integrate(odd, euclidean3_ball.metric, surf)
    assert abs(val) < 1e-12


def test_surface_radius_validation(sphere3):
    with pytest.raises(ValueError):
        make_surface(sphere3.chart, 10.0, (8, 10))
