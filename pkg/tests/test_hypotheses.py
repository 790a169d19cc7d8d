import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cauchy_spectral.expressions import parse
from cauchy_spectral.hypotheses import (classify_l2loc, esa_certificate, semiboundedness_bound,
                                        tail_lower_bound)
from cauchy_spectral.manifold import MetricField, ScalarField, build_grid, tilde_manifold
from cauchy_spectral.operators import assemble_w2
from cauchy_spectral.scenarios import catalog_names, load_catalog, scenario_from_dict


def line(n=40, lo=-1.0, hi=1.0):
    return build_grid([{"n": n, "lo": lo, "hi": hi, "boundary": "truncated"}])


def plane(n=20):
    ax = {"n": n, "lo": -1.0, "hi": 1.0, "boundary": "truncated"}
    return build_grid([ax, dict(ax)])


def flat_tilde(g, lapse="1"):
    return tilde_manifold(ScalarField.from_expr(lapse, g), MetricField.identity(g))


def one_d(name, lapse, potential, n=81, lo=-3.0, hi=3.0, **flags):
    return scenario_from_dict({"name": name, "grid": {"axes": [{"n": n, "lo": lo, "hi": hi,
                                                                  "boundary": "truncated"}]},
                               "lapse": {"expr": lapse}, "metric": {"expr": "1"},
                               "potential": {"expr": potential}, "flags": flags})


# local integrability -----------------------------------------------------------------

def test_constant_potential_is_integrable():
    g = line()
    pc = classify_l2loc(parse("2.5", 1), parse("1", 1), flat_tilde(g))
    assert pc.l2loc == "integrable"
    assert not np.any(pc.v_minus)


@pytest.mark.parametrize("p,expected", [(0.4, "integrable"), (0.6, "non-integrable")])
def test_one_dimensional_power_law(p, expected):
    g = line()
    pc = classify_l2loc(parse(f"sing(0, {p})", 1), parse("1", 1), flat_tilde(g))
    assert pc.l2loc == expected
    rep = pc.singularities[0]
    assert rep.analytic == rep.numeric == expected


@pytest.mark.parametrize("p,expected", [(0.9, "integrable"), (1.1, "non-integrable")])
def test_two_dimensional_power_law(p, expected):
    g = plane()
    V = ScalarField.from_expr(parse(f"sing(0.05, 0.05, {p})", 2), g)
    pc = classify_l2loc(V, parse("1", 2), flat_tilde(g))
    assert pc.l2loc == expected


def test_negative_singularity_does_not_fail_positive_part():
    g = line()
    pc = classify_l2loc(parse("-sing(0, 0.7)", 1), parse("1", 1), flat_tilde(g))
    assert pc.l2loc == "integrable"
    assert pc.notes


@given(st.lists(st.floats(-50, 50), min_size=40, max_size=40), st.floats(0.2, 3.0))
def test_potential_split_is_exact(vals, lapse):
    g = line()
    N = ScalarField.constant(g, lapse)
    pc = classify_l2loc(ScalarField(g, vals), N, flat_tilde(g))
    q = N.values ** 2 * np.array(vals)
    assert np.all(pc.v_plus >= 0) and np.all(pc.v_minus <= 0)
    np.testing.assert_array_equal(pc.v_plus + pc.v_minus, q)


# semi-boundedness ----------------------------------------------------------------------------

def test_minkowski_bound_by_both_methods():
    g = build_grid([{"n": 64, "lo": 0.0, "hi": 2 * math.pi, "boundary": "periodic"}])
    sb = semiboundedness_bound(assemble_w2(ScalarField.constant(g, 1.0), MetricField.identity(g), 0.81))
    assert sb.c == pytest.approx(0.81, abs=1e-10)
    assert sb.lambda_min == pytest.approx(sb.diagonal, abs=1e-10)
    assert sb.method == "diagonal=eigenvalue"


def test_cosh_lapse_bound():
    g = line(101, -5.0, 5.0)
    sb = semiboundedness_bound(assemble_w2(ScalarField.from_expr("cosh(x)", g),
                                           MetricField(g, np.cosh(g.points()[0]) ** 2), 1.0))
    assert sb.c >= 1.0 and sb.lambda_min >= 1.0 - 1e-10


def test_negative_potential_bound_direction():
    g = line(60)
    sb = semiboundedness_bound(assemble_w2(ScalarField.constant(g, 1.0), MetricField.identity(g), -3.0))
    assert sb.diagonal == -3.0
    assert sb.c >= -3.0
    assert sb.method == "eigenvalue"


def test_tail_check_flags_unbounded_below():
    g = line(41, -3.0, 3.0)
    assert tail_lower_bound(parse("-x^4", 1), g)[0] == "unbounded"
    status, lower = tail_lower_bound(parse("cosh(x)^2", 1), g)
    assert status == "bounded" and lower >= 1.0 - 1e-12


# certificate ---------------------------------------------------------------------------------

def test_static_catalog_scenario_is_verified():
    rep = esa_certificate(load_catalog("static-cosh-lapse"))
    assert rep.overall == "hypotheses-verified"
    assert rep.c >= 1.0
    assert rep.strictly_positive and rep.epsilon == pytest.approx(1.0)


def test_exponential_lapse_fails_completeness():
    rep = esa_certificate(load_catalog("kay-exp-lapse"))
    assert rep.overall == "hypothesis-failed(completeness)"


def test_zero_potential_is_verified_but_not_positive():
    rep = esa_certificate(one_d("massless", "sqrt(1 + x^2)", "0"))
    assert rep.overall == "hypotheses-verified"
    assert not rep.strictly_positive


def test_non_integrable_singularity_fails():
    rep = esa_certificate(one_d("spike", "1", "sing(0.01, 0.6)", lo=-1.0, hi=1.0))
    assert rep.overall == "hypothesis-failed(potential-l2loc)"


def test_positive_potential_gives_lapse_weighted_constant():
    sc = one_d("massive", "1 + x^2", "2")
    rep = esa_certificate(sc)
    N = sc.foliation.lapse_at(0.0).values
    assert rep.c >= np.min(N ** 2) * 2.0 - 1e-12


@pytest.mark.parametrize("name", catalog_names())
def test_certificate_is_monotone_in_hyperbolicity_flag(name):
    sc = load_catalog(name)
    weak = dataclasses.replace(sc, globally_hyperbolic=False, _foliation=[])
    strong, weakened = esa_certificate(sc, refine=False), esa_certificate(weak, refine=False)
    if strong.overall != "hypotheses-verified":
        assert weakened.overall != "hypotheses-verified"
    assert not (weakened.overall == "hypotheses-verified" and strong.overall != weakened.overall)
