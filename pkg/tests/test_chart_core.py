import numpy as np
import pytest

from vstatic.chart_core import (Chart, FDScheme, ScalarField, TensorField,
                                build_quadrature, fd_derivative,
                                fornberg_weights, integrate)
from vstatic.errors import ChartDomainError, StencilError


def unit_metric(n):
    eye = np.eye(n)
    return TensorField(2, lambda p: np.broadcast_to(eye, (len(p), n, n)).copy(),
                       symmetric=True)


def test_fornberg_known_weights():
    np.testing.assert_allclose(fornberg_weights([-2, -1, 0, 1, 2], 1) * 12,
                               [1, -8, 0, 8, -1], atol=1e-12)
    np.testing.assert_allclose(fornberg_weights([-2, -1, 0, 1, 2], 2) * 12,
                               [-1, 16, -30, 16, -1], atol=1e-12)
    np.testing.assert_allclose(fornberg_weights([0, 1, 2, 3, 4], 1) * 12,
                               [-25, 48, -36, 16, -3], atol=1e-11)


def test_quadrature_weight_sums():
    q = build_quadrature(Chart([[0, 1]]), 2)
    assert abs(q.weights.sum() - 1.0) < 1e-14
    m = 9
    qp = build_quadrature(Chart([[0, 2 * np.pi]], periodic=[True]), m)
    assert len(qp.nodes) == m
    np.testing.assert_allclose(qp.weights, 2 * np.pi / m)


def test_quadrature_rejects_low_order():
    with pytest.raises(ValueError):
        build_quadrature(Chart([[0, 1]]), 1)


def test_gauss_exactness_degree():
    chart = Chart([[0, 1], [0, 1]])
    q = build_quadrature(chart, (4, 4))
    f = ScalarField(lambda p: p[:, 0] ** 3 * p[:, 1] ** 3)
    assert abs(integrate(f, unit_metric(2), q) - 1 / 16) < 1e-14
    f7 = ScalarField(lambda p: p[:, 0] ** 7)
    assert abs(integrate(f7, unit_metric(2), q) - 1 / 8) < 1e-14


def test_composite_rule_handles_kinks():
    chart = Chart([[0, 1]])
    f = ScalarField(lambda p: np.abs(p[:, 0] - 0.5) ** 3)
    plain = integrate(f, unit_metric(1), build_quadrature(chart, 8))
    split = integrate(f, unit_metric(1), build_quadrature(chart, 8, {0: [0.5]}))
    exact = 2 * 0.5 ** 4 / 4
    assert abs(split - exact) < 1e-15
    assert abs(plain - exact) > 1e-9


def test_fd_derivative_examples():
    chart = Chart([[-2, 2]])
    s = ScalarField(lambda p: np.sin(p[:, 0]))
    assert abs(fd_derivative(s, chart, np.array([0.0]), (1,)) - 1.0) < 1e-10
    const = ScalarField(lambda p: np.full(len(p), 3.7))
    assert fd_derivative(const, chart, np.array([0.3]), (1,)) == 0.0
    chart2 = Chart([[-1, 1], [-1, 1]])
    f = ScalarField(lambda p: p[:, 0] ** 2 * p[:, 1])
    pts = np.array([[0.3, -0.4], [0.1, 0.9]])
    got = fd_derivative(f, chart2, pts, (1, 1))
    np.testing.assert_allclose(got, 2 * pts[:, 0], atol=1e-10)


def test_one_sided_stencils_at_boundary():
    chart = Chart([[0, 1]])
    s = ScalarField(lambda p: np.sin(p[:, 0]))
    d1 = fd_derivative(s, chart, np.array([1.0]), (1,))
    assert abs(d1 - np.cos(1.0)) < 1e-9
    d2 = fd_derivative(s, chart, np.array([0.0]), (2,))
    assert abs(d2 - 0.0) < 1e-8


def test_margin_rejection_names_axis():
    chart = Chart([[0, np.pi], [0, 2 * np.pi]], periodic=[False, True],
                  singular_margin=[[0.05, 0.05], [0, 0]])
    s = ScalarField(lambda p: np.sin(p[:, 0]))
    with pytest.raises(ChartDomainError, match="axis 0"):
        fd_derivative(s, chart, np.array([1e-8, 1.0]), (1, 0))


def test_stencil_error_when_band_too_narrow():
    chart = Chart([[0, 1e-3]])
    s = ScalarField(lambda p: p[:, 0])
    with pytest.raises(StencilError):
        fd_derivative(s, chart, np.array([5e-4]), (1,), FDScheme(4, 1e-3, 1))


def test_convergence_order_slope():
    chart = Chart([[-2, 2]])
    s = ScalarField(lambda p: np.sin(p[:, 0]))
    steps = [0.2, 0.1, 0.05]
    errs = [abs(fd_derivative(s, chart, np.array([0.3]), (1,),
                              FDScheme(4, h, 1)) - np.cos(0.3))
            for h in steps]
    slope = np.polyfit(np.log(steps), np.log(errs), 1)[0]
    assert abs(slope - 4) < 0.5


def test_richardson_does_not_degrade():
    chart = Chart([[-2, 2]])
    s = ScalarField(lambda p: np.sin(2 * p[:, 0]) + p[:, 0] ** 3)
    exact = 2 * np.cos(0.6) + 3 * 0.09
    e1 = abs(fd_derivative(s, chart, np.array([0.3]), (1,), FDScheme(4, 0.05, 1)) - exact)
    e2 = abs(fd_derivative(s, chart, np.array([0.3]), (1,), FDScheme(4, 0.05, 2)) - exact)
    assert e2 <= 2 * e1


def test_field_support_exact_zero():
    sup = np.array([[-0.5, 0.5]])
    f = ScalarField(lambda p: np.exp(p[:, 0]), support=sup)
    vals = f.evaluate(np.array([[0.0], [0.9], [-0.7]]))
    assert vals[1] == 0.0 and vals[2] == 0.0 and vals[0] == 1.0


def test_symmetric_field_enforced():
    fld = TensorField(2, lambda p: np.tile(np.array([[1.0, 2.0], [0.0, 3.0]]),
                                           (len(p), 1, 1)), symmetric=True)
    v = fld.evaluate(np.zeros((1, 2)))
    assert v[0, 0, 1] == v[0, 1, 0]


def test_chart_invariants():
    with pytest.raises(ValueError):
        Chart([[1, 1]])
    with pytest.raises(ValueError):
        Chart([[0, 1]], singular_margin=0.6)
    with pytest.raises(ValueError):
        Chart([[0, 1]], periodic=[True], singular_margin=0.1)


def test_integrate_rejects_indefinite_metric():
    chart = Chart([[0, 1]])
    q = build_quadrature(chart, 4)
    bad = TensorField(2, lambda p: np.where(
        (p[:, 0] > 0.5)[:, None, None], -np.ones((len(p), 1, 1)),
        np.ones((len(p), 1, 1))))
    from vstatic.errors import NotPositiveDefiniteError
    with pytest.raises(NotPositiveDefiniteError, match="node"):
        integrate(ScalarField(lambda p: np.ones(len(p))), bad, q)
