import numpy as np
import pytest

from vstatic.errors import PreconditionError
from vstatic.gauge import (divergence_residual, lie_derivative_field,
                           slice_project, tt_project)
from vstatic.model_spaces import make_perturbation

from conftest import cached_model


@pytest.fixture(scope="module")
def flat_ball():
    return cached_model("euclidean3_ball")


def test_divergence_free_input_unchanged(flat_ball):
    h = make_perturbation(flat_ball, "double_curl3d", seed=0)
    res = slice_project(h, flat_ball)
    assert abs(res.norm_ratio - 1.0) < 1e-4
    assert np.abs(res.coefficients).max() < 1e-6
    assert res.residual < 1e-6


def test_pure_lie_input_collapses(flat_ball, rng):
    base = slice_project(make_perturbation(flat_ball, "bump_tensor", seed=3),
                         flat_ball).basis
    c = np.zeros(base.size)
    idx = rng.choice(base.size, 10, replace=False)
    c[idx] = rng.standard_normal(10)
    lie = lie_derivative_field(flat_ball, base, c)
    nrm = flat_ball.l2_norm_tensor(lie)
    res = slice_project((1.0 / nrm) * lie, flat_ball)
    assert res.norm_ratio <= 1e-4
    assert res.residual < 1e-6


def test_projection_reaches_tolerance_and_idempotent(flat_ball):
    h = make_perturbation(flat_ball, "bump_tensor",
                          params={"rho": 1.0, "smoothness": 4}, seed=2)
    res = slice_project(h, flat_ball)
    assert res.converged
    full = divergence_residual(res.hprime, flat_ball)
    assert full <= 1e-6
    res2 = slice_project(res.hprime, flat_ball)
    change = flat_ball.l2_norm_tensor(res2.hprime + (-1.0) * res.hprime)
    assert change <= 1e-8


def test_generic_bump_divergence_is_order_one(flat_ball):
    h = make_perturbation(flat_ball, "bump_tensor", seed=4)
    assert divergence_residual(h, flat_ball) > 1e-3
    assert divergence_residual(flat_ball.metric, flat_ball) < 1e-8


def test_tt_projection_torus(torus3):
    h = make_perturbation(torus3, "tt_wave_torus", seed=0)
    res = tt_project(h, torus3)
    diff = torus3.l2_norm_tensor(res.hprime + (-1.0) * h.h)
    assert diff < 1e-10
    assert res.residual < 1e-8 and res.trace_residual < 1e-10


def test_tt_projection_sphere3(sphere3):
    h = make_perturbation(sphere3, "ambient_poly", seed=1)
    res = tt_project(h, sphere3)
    assert res.residual <= 1e-6
    assert res.trace_residual <= 1e-6
    assert res.norm_ratio > 0.01      # genuine transverse-traceless content


def test_tt_projection_collapses_on_round_2sphere(sphere2):
    h = make_perturbation(sphere2, "ambient_poly", seed=2)
    res = tt_project(h, sphere2)
    assert res.norm_ratio <= 1e-4
    assert "collapsed" in res.note


def test_tt_project_rejects_open_models(sphere3_ball):
    h = make_perturbation(sphere3_ball, "boundary_adapted", seed=1)
    with pytest.raises(PreconditionError):
        tt_project(h, sphere3_ball)


def test_gauge_first_variation_invariance(sphere3_ball):
    """DF is insensitive to the gauge direction at a critical potential."""
    import vstatic.variational as V
    from conftest import cached_vstatic
    vs = cached_vstatic("sphere3_ball", 1.0, 0.5)
    h = make_perturbation(sphere3_ball, "bump_tensor",
                          params={"rho": 1.0, "smoothness": 4}, seed=5)
    res = slice_project(h, sphere3_ball)
    df0 = V.DF(h, sphere3_ball, vs)
    df1 = V.DF(res.hprime, sphere3_ball, vs)
    assert abs(df0 - df1) <= 1e-6 * max(1.0, abs(df0))
