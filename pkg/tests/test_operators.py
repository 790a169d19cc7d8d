import io
import math

import numpy as np
import pytest
import scipy.sparse as sps
from hypothesis import given
from hypothesis import strategies as st

from cauchy_spectral.expressions import parse
from cauchy_spectral.manifold import (MetricExpr, MetricField, ScalarField, WeightedManifold,
                                      build_grid, weighted_inner_product)
from cauchy_spectral.operators import (assemble_w2, assemble_w2_expanded,
                                       assemble_weighted_laplacian, dirichlet_form, read_triplets,
                                       verify_green_formula, w2_continuum)


def circle(n):
    return build_grid([{"n": n, "lo": 0.0, "hi": 2 * math.pi, "boundary": "periodic"}])


def line(n, lo=-1.0, hi=1.0):
    return build_grid([{"n": n, "lo": lo, "hi": hi, "boundary": "truncated"}])


def skew_torus(n=10):
    ax = {"n": n, "lo": 0.0, "hi": 2 * math.pi, "boundary": "periodic"}
    g = build_grid([ax, dict(ax)])
    h = MetricExpr([["2 + sin(x)", "0.3*cos(y)"], ["0.3*cos(y)", "2 + cos(x)"]]).evaluate(g)
    return WeightedManifold.from_density(h, ScalarField.from_expr("1 + 0.2*sin(x + y)", g))


def symmetry_defect(op):
    W = sps.diags(op.weights)
    WA = (W @ op.matrix).toarray()
    return np.max(np.abs(WA - WA.T)) / np.max(np.abs(WA))


def test_periodic_laplacian_spectrum():
    n = 48
    g = circle(n)
    lap = assemble_weighted_laplacian(WeightedManifold.from_density(MetricField.identity(g)))
    ev = np.sort(np.linalg.eigvalsh(-lap.to_dense()))
    dx = g.spacings[0]
    exact = np.sort(4 / dx ** 2 * np.sin(np.pi * np.arange(n) / n) ** 2)
    np.testing.assert_allclose(ev, exact, rtol=1e-12, atol=1e-10)


def test_constants_in_kernel():
    wm = skew_torus()
    lap = assemble_weighted_laplacian(wm)
    assert np.max(np.abs(lap @ np.ones(wm.grid.size))) < 1e-12


def test_weighted_laplacian_converges_at_second_order():
    # m = exp(x): Delta_mu u = u'' + u'
    u = parse("sin(2*x)*exp(-x^2)", 1)
    exact = u.diff(parse("x", 1).sym).diff(parse("x", 1).sym) + u.diff(parse("x", 1).sym)
    errs = []
    for n in (65, 129, 257):
        g = line(n, -3.0, 3.0)
        wm = WeightedManifold.from_density(MetricField.identity(g), ScalarField.from_expr("exp(x)", g))
        x = g.points()[0]
        inner = slice(2, -2)
        errs.append(np.max(np.abs((assemble_weighted_laplacian(wm) @ u(x) - exact(x))[inner])))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders > 1.9)


def test_row_pattern_is_nearest_neighbour():
    g = line(20)
    op = assemble_weighted_laplacian(WeightedManifold.from_density(MetricField.identity(g)))
    assert np.diff(op.matrix.indptr).max() <= 3


def test_weighted_symmetry_with_cross_terms():
    assert symmetry_defect(assemble_weighted_laplacian(skew_torus())) <= 1e-13


@given(st.integers(0, 2 ** 32 - 1))
def test_green_formula_random_pairs(seed):
    rng = np.random.default_rng(seed)
    wm = skew_torus(8)
    u, v = rng.standard_normal((2, wm.grid.size))
    lap = assemble_weighted_laplacian(wm)
    lhs = weighted_inner_product(u, lap @ v, wm)
    res = verify_green_formula(lap, u, v, wm)
    assert res <= 1e-12 * (2 * abs(lhs) + 1)


def test_green_formula_zero_fields():
    wm = skew_torus(8)
    lap = assemble_weighted_laplacian(wm)
    z = np.zeros(wm.grid.size)
    assert verify_green_formula(lap, z, z, wm) == 0.0


@given(st.integers(0, 2 ** 32 - 1))
def test_laplacian_is_nonpositive(seed):
    u = np.random.default_rng(seed).standard_normal(100)
    g = circle(100)
    wm = WeightedManifold.from_density(MetricExpr([["1 + 0.5*sin(x)"]]).evaluate(g))
    assert -dirichlet_form(u, u, wm) <= 0
    assert weighted_inner_product(u, assemble_weighted_laplacian(wm) @ u, wm) <= 1e-12


# w^2 --------------------------------------------------------------------------------

def test_minkowski_w2_lowest_eigenvalue_is_mass():
    g = circle(64)
    op = assemble_w2(ScalarField.constant(g, 1.0), MetricField.identity(g), 2.25)
    assert np.linalg.eigvalsh(op.to_dense()).min() == pytest.approx(2.25, rel=1e-12)


def test_constant_lapse_rescales_laplacian():
    g = line(30)
    h = MetricField.identity(g)
    w2 = assemble_w2(ScalarField.constant(g, 2.0), h, 0.0)
    lap = assemble_weighted_laplacian(WeightedManifold.from_density(h))
    diff = np.max(np.abs(w2.to_dense() + 4 * lap.to_dense())) / np.max(np.abs(w2.to_dense()))
    assert diff <= 1e-14


def test_w2_is_lapse_squared_times_laplacian_of_lapse_measure():
    g = line(40, -2.0, 2.0)
    N = ScalarField.from_expr("cosh(x)", g)
    h = MetricExpr([["1 + x^2"]]).evaluate(g)
    V = ScalarField.from_expr("1 + 0.5*x", g)
    w2 = assemble_w2(N, h, V)
    lap = assemble_weighted_laplacian(WeightedManifold(g, h, ScalarField(g, N.values * h.sqrt_det)))
    ref = -(sps.diags(N.values ** 2) @ lap.matrix) + sps.diags(N.values ** 2 * V.values)
    assert np.max(np.abs((w2.matrix - ref).toarray())) <= 1e-13 * np.max(np.abs(ref.toarray()))


@given(st.floats(0.01, 5.0), st.integers(0, 1000))
def test_w2_lower_bound_by_potential(eps, seed):
    g = line(24, -2.0, 2.0)
    rng = np.random.default_rng(seed)
    N = ScalarField(g, 0.5 + rng.random(g.size))
    h = MetricField(g, 0.5 + rng.random(g.size))
    V = ScalarField(g, eps + rng.random(g.size))
    op = assemble_w2(N, h, V)
    S = np.sqrt(op.weights)
    lam = np.linalg.eigvalsh(S[:, None] * op.to_dense() / S[None, :]).min()
    assert lam >= np.min(N.values ** 2 * V.values) - 1e-10
    assert symmetry_defect(op) <= 1e-13


def test_expanded_matches_divergence_for_constant_lapse():
    g = line(33)
    h = MetricExpr([["1 + x^2"]]).evaluate(g)
    N = ScalarField.constant(g, 1.7)
    V = ScalarField.from_expr("x^2", g)
    a = assemble_w2(N, h, V).to_dense()
    b = assemble_w2_expanded(N, h, V).to_dense()
    assert np.max(np.abs(a - b)) <= 1e-12 * np.max(np.abs(a))


@pytest.mark.parametrize("lapse", ["exp(x)", "1 + x^2"])
def test_assemblies_agree_at_second_order(lapse):
    u = parse("exp(-8*x^2)*cos(3*x)", 1)
    errs, cont = [], []
    Nexpr = parse(lapse, 1)
    wu = w2_continuum(Nexpr, MetricExpr([["1"]]), parse("0", 1), u, 1)
    for n in (65, 129, 257):
        g = line(n)
        N = ScalarField.from_expr(Nexpr, g)
        h = MetricField.identity(g)
        x = g.points()[0]
        a = assemble_w2(N, h, 0.0) @ u(x)
        b = assemble_w2_expanded(N, h, 0.0) @ u(x)
        errs.append(np.max(np.abs(a - b)[2:-2]))
        cont.append(np.max(np.abs(a - wu(x))[2:-2]))
    for e in (errs, cont):
        assert np.all(np.log2(np.array(e[:-1]) / np.array(e[1:])) >= 1.9)


def test_triplet_export_round_trip():
    wm = skew_torus(6)
    op = assemble_weighted_laplacian(wm)
    buf = io.StringIO()
    op.export_triplets(buf)
    buf.seek(0)
    back = read_triplets(buf)
    assert (back != op.matrix).nnz == 0
