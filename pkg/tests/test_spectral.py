import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cauchy_spectral.manifold import MetricExpr, MetricField, ScalarField, build_grid
from cauchy_spectral.operators import SymmetricSparseOperator, assemble_w2
from cauchy_spectral.spectral import (NotPositiveDefiniteError, lambda_max_estimate,
                                      operator_sqrt_inverse, refinement_report,
                                      smallest_eigenpairs)


def circle(n):
    return build_grid([{"n": n, "lo": 0.0, "hi": 2 * math.pi, "boundary": "periodic"}])


def line(n, lo=-5.0, hi=5.0):
    return build_grid([{"n": n, "lo": lo, "hi": hi, "boundary": "truncated"}])


def minkowski(n, mass2=1.0):
    g = circle(n)
    return assemble_w2(ScalarField.constant(g, 1.0), MetricField.identity(g), mass2), g


def discrete_spectrum(n, mass2):
    dx = 2 * math.pi / n
    return np.sort(4 / dx ** 2 * np.sin(np.pi * np.arange(n) / n) ** 2) + mass2


@pytest.mark.parametrize("n,threshold", [(128, 512), (1024, 512)])
def test_minkowski_spectrum_dense_and_lanczos(n, threshold):
    op, _ = minkowski(n, 0.5)
    s = smallest_eigenpairs(op, k=7, dense_threshold=threshold)
    assert s.method == ("dense" if n <= threshold else "lanczos-shift-invert")
    np.testing.assert_allclose(s.eigenvalues, discrete_spectrum(n, 0.5)[:7], rtol=1e-10)
    assert s.lambda_min == pytest.approx(0.5, rel=1e-10)
    assert np.all(np.diff(s.eigenvalues) >= 0)
    assert np.all(s.residuals <= s.residual_tolerance)


def test_lanczos_matches_dense_on_variable_coefficients():
    g = line(700)
    op = assemble_w2(ScalarField.from_expr("cosh(x)", g), MetricExpr([["cosh(x)^2"]]).evaluate(g), 1.0)
    lan = smallest_eigenpairs(op, k=5)
    dense = smallest_eigenpairs(op, k=5, dense_threshold=1000)
    assert lan.method == "lanczos-shift-invert"
    np.testing.assert_allclose(lan.eigenvalues, dense.eigenvalues, rtol=1e-9)


def test_eigenvectors_are_weighted_orthonormal():
    g = line(120)
    op = assemble_w2(ScalarField.from_expr("1 + x^2", g), MetricExpr([["2 + sin(x)"]]).evaluate(g), "x^2")
    s = smallest_eigenpairs(op, k=6)
    G = s.eigenvectors.T @ (op.weights[:, None] * s.eigenvectors)
    assert np.max(np.abs(G - np.eye(6))) <= 1e-8


@given(st.integers(0, 2 ** 32 - 1))
def test_diagonal_shift_bound(seed):
    rng = np.random.default_rng(seed)
    g = line(40, -2.0, 2.0)
    N = ScalarField(g, 0.5 + rng.random(g.size))
    h = MetricField(g, 0.5 + rng.random(g.size))
    V = ScalarField(g, rng.uniform(-3.0, 3.0, g.size))
    op = assemble_w2(N, h, V)
    assert smallest_eigenpairs(op, k=1).lambda_min >= np.min(op.potential) - 1e-10


def test_laplacian_part_is_nonnegative():
    g = line(80)
    op = assemble_w2(ScalarField.from_expr("exp(x/3)", g), MetricField.identity(g), 0.0)
    assert smallest_eigenpairs(op, k=1).lambda_min >= -1e-10


def test_sqrt_inverse_identity_and_diagonal():
    I2 = SymmetricSparseOperator.from_matrix(np.eye(2), np.ones(2))
    si = operator_sqrt_inverse(I2)
    np.testing.assert_allclose(si.sqrt, np.eye(2), atol=1e-15)
    np.testing.assert_allclose(si.inverse, np.eye(2), atol=1e-15)
    D = SymmetricSparseOperator.from_matrix(np.diag([4.0, 9.0]), np.ones(2))
    si = operator_sqrt_inverse(D)
    np.testing.assert_allclose(si.sqrt, np.diag([2.0, 3.0]), atol=1e-14)
    np.testing.assert_allclose(si.inverse, np.diag([0.25, 1 / 9]), atol=1e-15)


def test_sqrt_inverse_reconstruct_and_commute(rng):
    g = line(150)
    op = assemble_w2(ScalarField.from_expr("cosh(x)", g), MetricExpr([["cosh(x)^2"]]).evaluate(g), 1.0)
    A = op.to_dense()
    si = operator_sqrt_inverse(op)
    scale = np.linalg.norm(A)
    assert np.linalg.norm(si.sqrt @ si.sqrt - A) <= 1e-10 * scale
    assert np.linalg.norm(si.inverse @ A - np.eye(op.n)) <= 1e-10 * np.sqrt(op.n)
    v = rng.standard_normal(op.n)
    for M in (si.sqrt, si.inverse):
        assert np.linalg.norm(M @ (A @ v) - A @ (M @ v)) <= 1e-10 * np.linalg.norm(A @ v)


def test_sqrt_eigenvalues_on_torus():
    ax = {"n": 12, "lo": 0.0, "hi": 2 * math.pi, "boundary": "periodic"}
    g = build_grid([ax, dict(ax)])
    op = assemble_w2(ScalarField.constant(g, 1.0), MetricField.identity(g), 1.0)
    dx = 2 * math.pi / 12
    one = 4 / dx ** 2 * np.sin(np.pi * np.arange(12) / 12) ** 2
    lam = np.sort((one[:, None] + one[None, :]).ravel() + 1.0)
    si = operator_sqrt_inverse(op)
    np.testing.assert_allclose(np.sort(np.linalg.eigvals(si.sqrt).real), np.sqrt(lam), rtol=1e-10)


def test_sqrt_refuses_indefinite_operator():
    op, _ = minkowski(32, -1.0)
    with pytest.raises(NotPositiveDefiniteError, match="lambda_min"):
        operator_sqrt_inverse(op)


def test_lambda_max_estimate_bounds_spectrum():
    op, g = minkowski(64, 1.0)
    est = lambda_max_estimate(op)
    top = discrete_spectrum(64, 1.0)[-1]
    assert 0.9 * top <= est <= top * (1 + 1e-12)


def test_refinement_report_lists_increases():
    rep = refinement_report([1.0, 0.9, 0.95, 0.94])
    assert rep["exceptions"] == [2]
    assert not rep["non_increasing"]
