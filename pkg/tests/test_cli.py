import json
import math
import textwrap

import numpy as np
import pytest

from cauchy_spectral.cli import main, run_certify, run_convergence, run_probe, seeded_cauchy_data
from cauchy_spectral.report import ReportEnvelope, jsonable
from cauchy_spectral.scenarios import (ScenarioError, catalog_names, load_catalog, parse_scenario,
                                       resolve_scenario)

SPEC_CATALOG = {"minkowski-1d", "minkowski-2d-torus", "static-cosh-lapse", "kay-exp-lapse",
                "kay-interval-completion", "frw-1d", "conformally-static", "ultrastatic",
                "harmonic-probe", "quartic-negative"}


def write(tmp_path, text, name="s.toml"):
    p = tmp_path / name
    p.write_text(textwrap.dedent(text))
    return p


# scenarios ------------------------------------------------------------------------------

def test_catalog_contains_required_entries():
    assert SPEC_CATALOG <= set(catalog_names())


def test_minkowski_entry():
    sc = load_catalog("minkowski-1d")
    ax = sc.grid.axes[0]
    assert (ax.n, ax.lo, ax.hi, ax.periodic) == (256, 0.0, 2 * math.pi, True)
    assert [str(e.source) for e in (sc.lapse, sc.potential)] == ["1", "1"]


def test_exponential_lapse_entry():
    sc = load_catalog("kay-exp-lapse")
    ax = sc.grid.axes[0]
    assert [e.kind for e in ax.ends] == ["truncated", "open"]
    assert ax.lo == 0.0 and math.isinf(ax.ends[1].location)
    assert sc.lapse.source == "exp(x)"


@pytest.mark.parametrize("name", sorted(SPEC_CATALOG))
def test_static_flag_means_no_time_dependence(name):
    sc = load_catalog(name)
    if sc.static:
        assert not sc.lapse.is_time_dependent and not sc.metric.is_time_dependent


def test_parse_scenario_file(tmp_path):
    p = write(tmp_path, """
        name = "bump"
        [grid]
        axes = [{n = 33, lo = -1.0, hi = 1.0, boundary = "truncated"}]
        [lapse]
        expr = "1 + x^2"
        [metric]
        expr = "1"
        [potential]
        expr = "2"
        [flags]
        static = true
    """)
    sc = parse_scenario(p)
    assert sc.name == "bump" and sc.grid.size == 33 and sc.static


def test_malformed_expression_names_field(tmp_path):
    p = write(tmp_path, """
        [grid]
        axes = [{n = 8, lo = 0.0, hi = 1.0}]
        [lapse]
        expr = "1 + "
    """)
    with pytest.raises(ScenarioError, match="lapse"):
        parse_scenario(p)


def test_toml_error_has_line(tmp_path):
    p = write(tmp_path, "[grid]\naxes = [\n[lapse\n")
    with pytest.raises(ScenarioError, match="line"):
        parse_scenario(p)


def test_nonpositive_lapse_reports_node(tmp_path):
    p = write(tmp_path, """
        [grid]
        axes = [{n = 9, lo = -1.0, hi = 1.0}]
        [lapse]
        expr = "x"
    """)
    with pytest.raises(ScenarioError, match="node"):
        parse_scenario(p)


def test_non_spd_metric_reports_node(tmp_path):
    p = write(tmp_path, """
        [grid]
        axes = [{n = 8, lo = 0.0, hi = 1.0, boundary = "periodic"}, {n = 8, lo = 0.0, hi = 1.0, boundary = "periodic"}]
        [metric]
        h11 = "1"
        h12 = "2"
        h22 = "1"
    """)
    with pytest.raises(ScenarioError, match="positive definite"):
        parse_scenario(p)


def test_singularity_on_a_node_is_rejected(capsys):
    from cauchy_spectral.scenarios import scenario_from_dict
    base = {"grid": {"axes": [{"n": 21, "lo": -1.0, "hi": 1.0}]}, "lapse": {"expr": "1"}}
    with pytest.raises(ScenarioError, match="node 10"):
        scenario_from_dict(dict(base, potential={"expr": "sing(0, 0.3)"}))
    scenario_from_dict(dict(base, potential={"expr": "sing(0.01, 0.3)"}))


def test_static_flag_rejects_time_dependence():
    from cauchy_spectral.scenarios import scenario_from_dict
    with pytest.raises(ScenarioError, match="static"):
        scenario_from_dict({"grid": {"axes": [{"n": 8, "lo": 0.0, "hi": 1.0}]},
                            "metric": {"expr": "1 + t^2"}, "time": {"t0": 0, "t1": 1, "samples": 3},
                            "flags": {"static": True}})


def test_unknown_scenario():
    with pytest.raises(ScenarioError):
        resolve_scenario("no-such-scenario")


# reports ------------------------------------------------------------------------------------

def test_jsonable_sanitises_non_finite():
    assert jsonable({"a": np.float64("inf"), "b": [np.nan, -np.inf], "c": np.int64(3)}) == \
        {"a": "inf", "b": ["nan", "-inf"], "c": 3}


def test_report_round_trip():
    env = run_certify(load_catalog("static-cosh-lapse"))
    back = ReportEnvelope.from_json(env.to_json())
    assert back == env
    assert json.loads(env.to_json())["schema"] == 1


def test_every_verdict_carries_provenance():
    env = run_certify(load_catalog("harmonic-probe"))
    s = env.sections
    assert s["certificate"]["slices"][0]["completeness"]["provenance"] in ("by-theorem",
                                                                           "by-direct-check",
                                                                           "inconclusive")
    assert s["probe"]["kind"].startswith("numerical evidence")


def test_certificate_text_for_static_cosh():
    env = run_certify(load_catalog("static-cosh-lapse"))
    assert env.sections["certificate"]["overall"] == "hypotheses-verified"
    assert env.ok


def test_probe_quartic_negative():
    assert run_probe(load_catalog("quartic-negative"))["esa"] is False


def test_convergence_minkowski_forms_exact():
    rep = run_convergence(load_catalog("minkowski-1d"), levels=5)
    assert rep["forms_agree_exactly"]
    assert all(o >= 1.9 for o in rep["orders"]["divergence_vs_continuum"])


def test_seeded_data_are_reproducible_and_supported():
    g = load_catalog("static-cosh-lapse").grid
    a, b = seeded_cauchy_data(g, 7), seeded_cauchy_data(g, 7)
    np.testing.assert_array_equal(a.phi.values, b.phi.values)
    assert a.support is not None and not a.support.all()


# command line -------------------------------------------------------------------------------

def test_cli_catalog(capsys):
    assert main(["catalog"]) == 0
    out = capsys.readouterr().out
    assert all(name in out for name in SPEC_CATALOG)


def test_cli_certify_json(tmp_path, capsys):
    out = tmp_path / "r.json"
    assert main(["certify", "--scenario", "static-cosh-lapse", "--json", "--out", str(out)]) == 0
    printed = json.loads(capsys.readouterr().out)
    assert printed == json.loads(out.read_text())
    assert printed["sections"]["certificate"]["overall"] == "hypotheses-verified"


def test_cli_failed_hypothesis_is_not_an_error(capsys):
    assert main(["certify", "--scenario", "kay-exp-lapse"]) == 0
    assert "hypothesis-failed(completeness)" in capsys.readouterr().out


def test_cli_usage_errors(capsys):
    assert main(["spectrum"]) == 2
    assert main(["spectrum", "--scenario", "nope"]) == 2
    assert main(["spectrum", "--scenario", "minkowski-1d", "--grid-n", "2"]) == 2
    assert main(["probe", "--scenario", "ultrastatic"]) == 2
    assert main(["frobnicate"]) == 2


def test_cli_component_error_exit_code(capsys):
    # a single step over unit time violates the stability bound inside the evolve section
    assert main(["evolve", "--scenario", "minkowski-1d", "--time-steps", "1", "--json"]) == 1
    report = json.loads(capsys.readouterr().out)
    assert report["errors"][0]["section"] == "evolution"


def test_text_summary_tolerates_non_finite_values():
    from cauchy_spectral.cli import _summary
    env = ReportEnvelope("spectrum", {})
    env.add("spectrum", {"method": "dense", "eigenvalues": [float("inf"), 1.5]})
    back = ReportEnvelope.from_json(env.to_json())
    assert "inf, 1.5" in _summary(back)


def test_cli_exports(tmp_path, capsys):
    ops, traj = tmp_path / "w2.txt", tmp_path / "phi.csv"
    assert main(["spectrum", "--scenario", "minkowski-1d", "--grid-n", "16",
                 "--export-operator", str(ops)]) == 0
    assert main(["evolve", "--scenario", "minkowski-1d", "--grid-n", "16", "--csv", str(traj)]) == 0
    assert len(ops.read_text().splitlines()) > 16
    assert traj.read_text().startswith("t,node_0")


def test_thread_cap_from_environment(monkeypatch, capsys):
    monkeypatch.setenv("CAUCHY_SPECTRAL_THREADS", "1")
    assert main(["certify", "--scenario", "minkowski-1d", "--grid-n", "32"]) == 0
    monkeypatch.setenv("CAUCHY_SPECTRAL_THREADS", "zero")
    assert main(["certify", "--scenario", "minkowski-1d", "--grid-n", "32"]) == 2
