import numpy as np
import pytest

from vstatic.errors import PreconditionError
from vstatic.model_spaces import (catalog_names, make_model, make_perturbation,
                                  make_vstatic, resolve_model,
                                  vstatic_residuals)
from vstatic.variational import scalar_functional

from conftest import cached_model, cached_vstatic


def test_catalog_constants_and_volumes():
    expect_vol = {
        "sphere3": 2 * np.pi ** 2,
        "sphere2": 4 * np.pi,
        "euclidean3_ball": 4 * np.pi / 3,
        "euclidean2_ball": np.pi,
        "torus3": (2 * np.pi) ** 3,
        "s2xs2": (4 * np.pi) ** 2,
        "hyperbolic3_ball": np.pi * (np.sinh(2.0) - 2.0),
    }
    for name, vol in expect_vol.items():
        model = cached_model(name)
        assert abs(model.volume() - vol) < 1e-8 * max(1.0, vol), name
        assert model.verify_constants(npoints=25)["ok"], name


def test_make_model_rejections():
    with pytest.raises(ValueError):
        make_model("euclidean_ball", 5)
    with pytest.raises(ValueError):
        make_model("sphere_ball", 3, radius=3.3)
    with pytest.raises(ValueError):
        make_model("nonsense", 3)
    with pytest.raises(KeyError):
        resolve_model("madeup17")


def test_vstatic_catalog_examples():
    s3 = cached_model("sphere3")
    vs = make_vstatic(s3, 1.0, 0.0)
    assert abs(vs.kappa + 2.0) < 1e-14          # f = 1 on the unit 3-sphere
    vs0 = make_vstatic(s3, 0.0, 1.0)
    assert vs0.kappa == 0.0                      # pure first harmonic
    e3 = cached_model("euclidean3_ball")
    vsc = make_vstatic(e3, 1.0, 0.5)
    assert abs(vsc.kappa + 2.0) < 1e-14          # kappa = -2(n-1) b
    h3 = cached_model("hyperbolic3_ball")
    vsh = make_vstatic(h3, 1.0, 0.3)
    assert abs(vsh.kappa - 2.0) < 1e-14


def test_vstatic_residuals_certified(rng):
    for spec, a, b in (("sphere3_ball", 1.0, 0.5), ("euclidean2_ball", 1.0, 0.2)):
        model = cached_model(spec)
        vs = cached_vstatic(spec, a, b)
        pts = model.sample_points(rng, 40)
        r1, r2 = vstatic_residuals(model, vs.f, vs.kappa, pts)
        assert r1.max() < 1e-6 and r2.max() < 1e-6


def test_vstatic_rejections():
    s2x = cached_model("s2xs2")
    with pytest.raises(PreconditionError):
        make_vstatic(s2x, 1.0, 0.0)
    torus = cached_model("torus3")
    with pytest.raises(PreconditionError):
        make_vstatic(torus, 1.0, 0.5)


def test_perturbation_flags():
    e2 = cached_model("euclidean2_ball")
    airy = make_perturbation(e2, "airy2d", seed=7)
    assert airy.divergence_free and airy.compact_support
    assert airy.flag_residuals["divergence"] < 1e-8

    e3 = cached_model("euclidean3_ball")
    dc = make_perturbation(e3, "double_curl3d", seed=7)
    assert dc.divergence_free and dc.compact_support
    assert dc.tangentially_vanishing

    t3 = cached_model("torus3")
    tt = make_perturbation(t3, "tt_wave_torus", seed=1,
                           params={"k": (1, 0, 0),
                                   "sigma": np.diag([0.0, 1.0, -1.0])})
    assert tt.divergence_free and tt.traceless
    assert tt.flag_residuals["trace"] < 1e-10

    sb = cached_model("sphere3_ball")
    ba = make_perturbation(sb, "boundary_adapted", seed=2)
    assert ba.tangentially_vanishing and not ba.divergence_free


def test_perturbation_normalized():
    e3 = cached_model("euclidean3_ball")
    h = make_perturbation(e3, "bump_tensor", seed=9)
    assert abs(e3.l2_norm_tensor(h.h) - 1.0) < 1e-10


def test_family_model_compatibility():
    s3 = cached_model("sphere3")
    with pytest.raises(PreconditionError):
        make_perturbation(s3, "airy2d", seed=0)
    with pytest.raises(PreconditionError):
        make_perturbation(s3, "tt_wave_torus", seed=0)
    with pytest.raises(ValueError):
        make_perturbation(s3, "no_such_family", seed=0)


def test_conformal_trace(rng):
    s3 = cached_model("sphere3")
    h = make_perturbation(s3, "conformal", seed=3)
    pts = s3.sample_points(rng, 5)
    g = s3.metric.evaluate(pts)
    hv = h.h.evaluate(pts)
    # h = phi gbar: the trace-free part vanishes
    phi = np.einsum("mab,mab->m", np.linalg.inv(g), hv) / 3.0
    np.testing.assert_allclose(hv, phi[:, None, None] * g, atol=1e-12)


def test_torus_scaling_family_scalar_flat():
    torus = cached_model("torus3")
    rng = np.random.default_rng(5)
    pts = torus.sample_points(rng, 10)
    for c in (0.7, 1.0, 1.4):
        vals = scalar_functional(float(c) * torus.metric, torus, pts)
        assert np.abs(vals).max() < 1e-8


def test_resolve_model_with_params():
    m = resolve_model("euclidean3_ball:r=0.5")
    assert abs(m.chart.box[0, 1] - 0.5) < 1e-15
    assert sorted(catalog_names())
