import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cauchy_spectral.completeness import (CompletenessError, check_assumption_bounds,
                                          classify_increments, end_length_1d, geodesic_shoot,
                                          ghcomp_verdict)
from cauchy_spectral.expressions import parse
from cauchy_spectral.manifold import Foliation, MetricExpr, build_grid
from cauchy_spectral.scenarios import load_catalog


def foliation(grid_spec, lapse, metric, times):
    g = build_grid(grid_spec)
    d = g.dimension
    m = MetricExpr([[metric]]) if d == 1 else MetricExpr.conformal(parse(metric, 2), 2)
    return Foliation(g, np.asarray(times, float), parse(lapse, d), m)


LINE = [{"n": 41, "lo": -2.0, "hi": 2.0, "boundary": "open"}]
CIRCLE = [{"n": 16, "lo": 0.0, "hi": 2 * math.pi, "boundary": "periodic"}]


# one-dimensional ends -------------------------------------------------------------

def test_euclidean_line_is_complete():
    for side in "-+":
        v = end_length_1d("1", side, location=math.inf if side == "+" else -math.inf, start=0.0)
        assert v.verdict == "complete"


def test_exponential_lapse_end_has_unit_length():
    v = end_length_1d(parse("exp(-2*x)", 1), "+", location=math.inf, start=0.0)
    assert v.verdict == "incomplete"
    assert v.evidence["length_estimate"] == pytest.approx(1.0, rel=1e-8)


def test_interval_completed_by_lapse():
    h = parse("1/(x*(1-x))^2", 1)
    assert end_length_1d(h, "-", location=0.0, start=0.5).verdict == "complete"
    assert end_length_1d(h, "+", location=1.0, start=0.5).verdict == "complete"


def test_unit_interval_is_incomplete():
    v = end_length_1d("1", "+", location=1.0, start=0.0)
    assert v.verdict == "incomplete"
    assert v.evidence["length_estimate"] == pytest.approx(1.0, rel=1e-8)


@pytest.mark.parametrize("p,expected", [(0.5, "complete"), (1.0, "complete"), (1.5, "incomplete"),
                                        (3.0, "incomplete")])
def test_power_law_ends_match_improper_integral(p, expected):
    # length density x^-p on [1, inf) diverges iff p <= 1
    v = end_length_1d(parse(f"x^(-{2 * p})", 1), "+", location=math.inf, start=1.0)
    assert v.verdict == expected


def test_missing_closed_form_is_an_error():
    with pytest.raises(CompletenessError):
        end_length_1d(parse("1 + t", 1), "+", location=math.inf, start=0.0)


@given(st.floats(0.05, 0.85))
def test_geometric_increments_are_convergent(r):
    assert classify_increments([r ** k for k in range(20)])[0] == "convergent"


@given(st.floats(1.0, 3.0))
def test_nonshrinking_increments_are_divergent(r):
    assert classify_increments([r ** k for k in range(20)])[0] == "divergent"


def test_catalog_one_dimensional_verdicts():
    expected = {"kay-exp-lapse": "incomplete", "kay-interval-completion": "complete",
                "static-cosh-lapse": "complete", "harmonic-probe": "complete",
                "quartic-negative": "complete", "conformally-static": "complete"}
    for name, verdict in expected.items():
        assert ghcomp_verdict(load_catalog(name).foliation).verdict == verdict, name


# provenance ----------------------------------------------------------------------------

def test_static_verdict_is_by_theorem():
    v = ghcomp_verdict(load_catalog("static-cosh-lapse").foliation)
    assert (v.verdict, v.provenance) == ("complete", "by-theorem")


def test_exponential_lapse_is_by_direct_check():
    v = ghcomp_verdict(load_catalog("kay-exp-lapse").foliation, globally_hyperbolic=False)
    assert (v.verdict, v.provenance) == ("incomplete", "by-direct-check")
    plus = [e for e in v.ends if e.side == "+"][0]
    assert plus.evidence["length_estimate"] == pytest.approx(1.0, rel=1e-8)


def test_conformally_static_uses_rescaled_bounds():
    v = ghcomp_verdict(load_catalog("conformally-static").foliation)
    assert v.verdict == "complete"
    assert v.rule in ("static-spacetime", "conformal-metric-bounds")


def test_direct_check_overrides_global_hyperbolicity_claim():
    v = ghcomp_verdict(load_catalog("kay-exp-lapse").foliation, globally_hyperbolic=True)
    assert v.verdict == "incomplete"


# geodesics ---------------------------------------------------------------------------------

def test_flat_torus_geodesics_do_not_escape():
    g = build_grid(CIRCLE * 2)
    res = geodesic_shoot(MetricExpr.conformal(1.0, 2), [1.0, 1.0], [0.6, 0.8], 1.0, 1e-2, g)
    assert not res.escaped
    assert res.speed_drift <= 1e-8
    np.testing.assert_allclose(res.points[-1], [1.6, 1.8], atol=1e-12)


def test_exponential_conformal_factor_escapes_at_unit_parameter():
    g = build_grid([{"n": 20, "lo": 0.0, "hi": 1.0, "ends": ["truncated", "open"]},
                    {"n": 20, "lo": 0.0, "hi": 1.0, "boundary": "periodic"}])
    metric = MetricExpr.conformal(parse("exp(-2*x)", 2), 2)
    res = geodesic_shoot(metric, [0.0, 0.5], [1.0, 0.0], 2.0, 1e-2, g)
    assert res.escaped
    assert res.escape_parameter == pytest.approx(1.0, abs=1e-3)
    assert res.speed_drift <= 1e-8


@given(st.floats(0.0, 2 * math.pi))
def test_geodesic_speed_is_conserved(angle):
    g = build_grid(CIRCLE * 2)
    metric = MetricExpr([["2 + sin(x)", "0.3*cos(y)"], ["0.3*cos(y)", "2 + cos(x)"]])
    res = geodesic_shoot(metric, [1.0, 2.0], [math.cos(angle), math.sin(angle)], 1.0, 1e-2, g)
    assert res.speed_drift <= 1e-8


# bounds ------------------------------------------------------------------------------------

def test_static_bounds_are_exactly_one():
    fol = foliation(LINE, "cosh(x)", "1 + x^2", np.linspace(0, 1, 5))
    b = check_assumption_bounds(fol)
    assert (b.A, b.D) == (1.0, 1.0)
    assert b.alpha_B == 1.0
    assert b.alpha_C == pytest.approx(math.cosh(2.0), rel=1e-15)
    assert b.bounded


def test_frw_bounds_from_scale_factor_range():
    fol = foliation(CIRCLE, "1", "2^(2*sin(t))", np.linspace(0, 2 * math.pi, 401))
    b = check_assumption_bounds(fol)
    assert b.A == pytest.approx(0.25, abs=1e-10)
    assert b.D == pytest.approx(4.0, abs=1e-10)
    assert not b.metric_unbounded


def test_exponential_growth_raises_unbounded_flag():
    fol = foliation(CIRCLE, "1", "exp(2*t)", np.linspace(0, 10, 41))
    b = check_assumption_bounds(fol)
    assert b.metric_unbounded and not b.bounded
    assert not check_assumption_bounds(fol, exhaustive=True).metric_unbounded


@given(st.floats(0.01, 0.9), st.floats(0.1, 3.0))
def test_bounds_bracket_one(amp, freq):
    fol = foliation(CIRCLE, "1", f"1 + {amp}*sin({freq}*t + x)", np.linspace(-1, 1, 9))
    b = check_assumption_bounds(fol)
    assert 0 < b.A <= 1.0 <= b.D
    assert 0 < b.alpha_B <= b.alpha_C


def test_bounds_need_two_samples():
    with pytest.raises(ValueError):
        check_assumption_bounds(foliation(CIRCLE, "1", "1", [0.0]))
