import numpy as np
import pytest

from vstatic.chart_core import Chart, FDScheme, ScalarField, TensorField, \
    integrate_values
from vstatic.errors import PreconditionError
from vstatic.model_spaces import make_perturbation
from vstatic.tensor_calc import (covariant_derivative, curvature, divergence,
                                 laplacian, q_of_w, rm_dot, tensor_norm2,
                                 weyl_dot, weyl_equation_residual)

from conftest import cached_model


def test_space_form_curvature(sphere3, torus3, hyperbolic3_ball, rng):
    pts = sphere3.sample_points(rng, 10)
    pack = curvature(sphere3.metric, sphere3.chart, pts)
    assert np.abs(pack.scalar - 6).max() < 1e-6
    assert np.abs(pack.ricci - 2 * pack.g).max() < 1e-6
    assert np.abs(pack.weyl_low).max() < 1e-6

    pts = torus3.sample_points(rng, 10)
    packt = curvature(torus3.metric, torus3.chart, pts)
    assert np.abs(packt.riemann_low).max() < 1e-8

    pts = hyperbolic3_ball.sample_points(rng, 10)
    packh = curvature(hyperbolic3_ball.metric, hyperbolic3_ball.chart, pts)
    assert np.abs(packh.scalar + 6).max() < 1e-6
    assert np.abs(packh.ricci + 2 * packh.g).max() < 1e-6


def test_convention_lock(sphere3, rng):
    pts = sphere3.sample_points(rng, 15)
    pack = curvature(sphere3.metric, sphere3.chart, pts)
    target = (np.einsum("mad,mbc->mabcd", pack.g, pack.g)
              - np.einsum("mac,mbd->mabcd", pack.g, pack.g))
    assert np.abs(pack.riemann_low - target).max() < 1e-6


def test_riemann_symmetries_and_bianchi(sphere3_ball, rng):
    pts = sphere3_ball.sample_points(rng, 8)
    R = curvature(sphere3_ball.metric, sphere3_ball.chart, pts).riemann_low
    assert np.abs(R + np.einsum("mbacd->mabcd", R)).max() < 1e-8
    assert np.abs(R + np.einsum("mabdc->mabcd", R)).max() < 1e-8
    assert np.abs(R - np.einsum("mcdab->mabcd", R)).max() < 1e-8
    bianchi = (R + np.einsum("macdb->mabcd", R) + np.einsum("madbc->mabcd", R))
    assert np.abs(bianchi).max() < 1e-8


def test_weyl_trace_free(s2xs2, rng):
    pts = s2xs2.sample_points(rng, 6)
    pack = curvature(s2xs2.metric, s2xs2.chart, pts)
    W = pack.weyl_low
    for sub in ("mad,mabcd->mbc", "mbc,mabcd->mad", "mab,mabcd->mcd"):
        assert np.abs(np.einsum(sub, pack.ginv, W)).max() < 1e-7
    assert np.abs(W).max() > 0.1


def test_weyl_rejected_in_dim2(sphere2, rng):
    with pytest.raises(ValueError, match="dimension 2"):
        curvature(sphere2.metric, sphere2.chart,
                  sphere2.sample_points(rng, 2), want_weyl=True)


def test_metric_compatibility(sphere3, rng):
    pts = sphere3.sample_points(rng, 6)
    nab = covariant_derivative(sphere3.metric, sphere3.metric, sphere3.chart, pts)
    assert np.abs(nab).max() < 1e-8
    const = ScalarField(lambda p: np.full(len(p), 2.5))
    dc = covariant_derivative(const, sphere3.metric, sphere3.chart, pts)
    assert np.abs(dc).max() < 1e-12


def test_flat_covariant_reduces_to_partials(torus3, rng):
    f = ScalarField(lambda p: np.sin(p[:, 0]) ** 2)
    pts = torus3.sample_points(rng, 5)
    nab = covariant_derivative(f, torus3.metric, torus3.chart, pts)
    np.testing.assert_allclose(nab[:, 0], np.sin(2 * pts[:, 0]), atol=1e-10)


def test_divergence_examples(torus3, euclidean2_ball, rng):
    # flat torus wave
    def ttw(p):
        h = np.zeros((len(p), 3, 3))
        c = np.cos(p[:, 0])
        h[:, 1, 1] = c
        h[:, 2, 2] = -c
        return h
    htt = TensorField(2, ttw, symmetric=True)
    pts = torus3.sample_points(rng, 6)
    assert np.abs(divergence(htt, torus3.metric, torus3.chart, pts)).max() < 1e-10
    # the metric itself
    assert np.abs(divergence(torus3.metric, torus3.metric, torus3.chart,
                             pts)).max() < 1e-10
    # stream-potential construction on the flat 2-ball
    h = make_perturbation(euclidean2_ball, "airy2d", seed=3)
    pts2 = euclidean2_ball.sample_points(rng, 8)
    dv = divergence(h.h, euclidean2_ball.metric, euclidean2_ball.chart, pts2)
    assert np.abs(dv).max() < 1e-8


def test_laplacian_examples(sphere2, torus3, rng):
    u = ScalarField(lambda p: np.cos(p[:, 0]))
    pts = sphere2.sample_points(rng, 6)
    lap = laplacian(u, sphere2.metric, sphere2.chart, pts)
    np.testing.assert_allclose(lap, -2 * np.cos(pts[:, 0]), atol=1e-6)
    f = ScalarField(lambda p: np.sin(p[:, 0]) ** 2)
    ptst = torus3.sample_points(rng, 4)
    lapt = laplacian(f, torus3.metric, torus3.chart, ptst)
    np.testing.assert_allclose(lapt, 2 * np.cos(2 * ptst[:, 0]), atol=1e-8)
    const = TensorField(2, lambda p: np.tile(np.diag([1.0, 2.0, 3.0]),
                                             (len(p), 1, 1)), symmetric=True)
    lc = laplacian(const, torus3.metric, torus3.chart, ptst)
    assert np.abs(lc).max() < 1e-8


def test_rm_dot_and_weyl_dot(sphere3, rng):
    pts = sphere3.sample_points(rng, 5)
    pack = curvature(sphere3.metric, sphere3.chart, pts)
    # full curvature contraction of the metric equals +R on the locked
    # convention (contraction pattern fixed by the space-form identity)
    np.testing.assert_allclose(rm_dot(pack.g, pack), 6.0, atol=1e-5)
    h = rng.standard_normal((len(pts), 3, 3))
    h = 0.5 * (h + np.swapaxes(h, 1, 2))
    assert np.abs(weyl_dot(h, pack)).max() < 1e-6
    assert np.abs(rm_dot(np.zeros_like(h), pack)).max() == 0.0


def _qw_loop_oracle(ginv, W):
    m, n = W.shape[0], W.shape[-1]
    B = np.zeros_like(W)
    for i in range(n):
        for j in range(n):
            for k in range(n):
                for l in range(n):
                    acc = 0.0
                    for p in range(n):
                        for q in range(n):
                            for r in range(n):
                                for s_ in range(n):
                                    acc += (ginv[0, p, q] * ginv[0, r, s_]
                                            * W[0, p, i, j, r] * W[0, q, k, l, s_])
                    B[0, i, j, k, l] = acc
    return (B - B.transpose(0, 2, 1, 3, 4) + B.transpose(0, 1, 3, 2, 4)
            - np.einsum("mjkil->mijkl", B))


def test_q_of_w_against_loop_oracle(s2xs2, sphere3, rng):
    pts = s2xs2.sample_points(rng, 1)
    pack = curvature(s2xs2.metric, s2xs2.chart, pts)
    qw = q_of_w(pack)
    assert np.abs(qw).max() > 1e-3
    oracle = _qw_loop_oracle(pack.ginv, pack.weyl_low)
    np.testing.assert_allclose(qw, oracle, atol=1e-10)
    # space form: identically zero
    pts3 = sphere3.sample_points(rng, 3)
    pack3 = curvature(sphere3.metric, sphere3.chart, pts3)
    assert np.abs(q_of_w(pack3)).max() < 1e-10


def test_weyl_equation_residual(s2xs2, rng):
    pts = s2xs2.sample_points(rng, 2)
    res = weyl_equation_residual(s2xs2, pts)
    assert np.abs(res).max() < 1e-4

    torus = cached_model("torus3")
    with pytest.raises(ValueError, match="dimension"):
        weyl_equation_residual(torus, torus.sample_points(rng, 1))


def test_scalar_constant_at_random_points():
    rng = np.random.default_rng(77)
    for name in ("sphere3", "sphere2", "euclidean3_ball", "hyperbolic3_ball",
                 "torus3", "s2xs2", "sphere4"):
        model = cached_model(name)
        pts = model.sample_points(rng, 50)
        pack = curvature(model.metric, model.chart, pts, want_weyl=False)
        assert np.abs(pack.scalar - model.scalar_const).max() < 1e-6, name


def test_divergence_adjointness(euclidean3_ball, rng):
    # int <delta h, w> = int <h, sym grad w> for compactly supported h
    model = euclidean3_ball
    h = make_perturbation(model, "double_curl3d", seed=5)
    rule = model.quadrature
    g = model.metric.evaluate(rule.nodes)
    ginv = np.linalg.inv(g)

    def wfn(p):
        y = model.to_embedding(np.atleast_2d(p))
        J = model.embedding_jacobian(np.atleast_2d(p))
        return np.einsum("mia,i->ma", J, np.array([0.3, -0.2, 0.7]))
    om = TensorField(1, wfn)
    dv = divergence(h.h, model.metric, model.chart, rule.nodes)
    lhs = integrate_values(np.einsum("mab,ma,mb->m", ginv, dv,
                                     om.evaluate(rule.nodes)), g, rule)
    nab = covariant_derivative(om, model.metric, model.chart, rule.nodes)
    sym = 0.5 * (nab + np.swapaxes(nab, 1, 2))
    hv = h.h.evaluate(rule.nodes)
    rhs = integrate_values(np.einsum("mac,mbd,mab,mcd->m", ginv, ginv, hv, sym),
                           g, rule)
    assert abs(lhs - rhs) < 1e-7 * max(1.0, abs(lhs))
