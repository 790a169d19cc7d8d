"""Command drivers and the ``cauchy-spectral`` entry point.

Verbs: ``certify``, ``spectrum``, ``evolve``, ``probe``, ``converge`` and
``catalog``.  Exit codes: 0 success, 1 a component check raised, 2 bad usage
or configuration.  Failed hypotheses are results, not errors.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from typing import Callable

import numpy as np

from .completeness import check_assumption_bounds
from .evolution import (CauchyData, conservation_check, discrete_energy, evolve_kg,
                        stability_limit)
from .hypotheses import esa_certificate
from .manifold import Grid
from .operators import assemble_w2, assemble_w2_expanded, w2_continuum
from .probe import weyl_classify_scenario
from .report import ReportEnvelope
from .scenarios import CATALOG, Scenario, ScenarioError, load_catalog, resolve_scenario
from .spectral import NotPositiveDefiniteError, operator_sqrt_inverse, smallest_eigenpairs

__all__ = ["run_certify", "run_spectrum", "run_evolve", "run_probe", "run_convergence",
           "seeded_cauchy_data", "main", "thread_cap"]

THREADS_ENV = "CAUCHY_SPECTRAL_THREADS"


class UsageError(ValueError):
    pass


def thread_cap() -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw is None or raw == "":
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise UsageError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return n


def _run_sections(env: ReportEnvelope, jobs: list[tuple[str, Callable]], threads: int = 1) -> None:
    """Run independent sections, possibly in parallel; assemble in list order."""

    def timed(fn):
        start = time.perf_counter()
        try:
            return fn(), None, time.perf_counter() - start
        except Exception as exc:  # component failures are reported, not raised
            return None, f"{type(exc).__name__}: {exc}", time.perf_counter() - start

    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda job: timed(job[1]), jobs))
    else:
        results = [timed(fn) for _, fn in jobs]
    for (name, _), (value, err, secs) in zip(jobs, results):
        env.timings[name] = round(secs, 6)
        if err is not None:
            env.errors.append({"section": name, "error": err})
        elif value is not None:
            env.add(name, value)


# ---------------------------------------------------------------------------
# seeded data and test functions

def _axis_profile(ax, coords: np.ndarray, rng: np.random.Generator, modes: int = 3):
    """Random smooth profile along one axis; compactly supported on truncated axes."""
    L = ax.hi - ax.lo
    s = (coords - ax.lo) / L
    amp = rng.standard_normal(2 * modes) / np.arange(1, modes + 1).repeat(2)
    prof = sum(amp[2 * k] * np.cos(2 * np.pi * (k + 1) * s) + amp[2 * k + 1] * np.sin(2 * np.pi * (k + 1) * s)
               for k in range(modes))
    if ax.periodic:
        return prof, np.ones_like(s, dtype=bool)
    r = (s - 0.5) / 0.3
    inside = np.abs(r) < 1
    bump = np.zeros_like(s)
    bump[inside] = np.exp(1.0 - 1.0 / (1.0 - r[inside] ** 2))
    return (1.5 + prof) * bump, inside


def seeded_cauchy_data(grid: Grid, seed: int) -> CauchyData:
    """Smooth random Cauchy data, compactly supported along truncated axes."""
    rng = np.random.default_rng(seed)
    mesh = grid.mesh()
    parts = []
    for _ in range(2):
        vals = np.ones(grid.shape)
        mask = np.ones(grid.shape, dtype=bool)
        for a, ax in enumerate(grid.axes):
            prof, inside = _axis_profile(ax, mesh[a], rng)
            vals = vals * prof
            mask &= inside
        vals[~mask] = 0.0
        parts.append((vals.ravel(), mask.ravel()))
    (phi, m1), (pi, _) = parts
    return CauchyData.from_arrays(grid, phi, pi, support=m1)


def _test_function(grid: Grid):
    """Closed-form smooth test function: periodic modes or a centred Gaussian per axis."""
    from .expressions import X, Y, Expr
    import sympy as sp
    f = sp.Integer(1)
    for sym, ax in zip((X, Y), grid.axes):
        L = ax.hi - ax.lo
        if ax.periodic:
            s = 2 * sp.pi * (sym - ax.lo) / L
            f *= sp.sin(s) + sp.Rational(1, 2) * sp.cos(2 * s) + sp.Rational(1, 4)
        else:
            c, w = 0.5 * (ax.lo + ax.hi), L / 10.0
            f *= sp.exp(-((sym - c) / w) ** 2)
    return Expr(f)


# ---------------------------------------------------------------------------
# drivers

def _scenario_echo(sc: Scenario) -> dict:
    return sc.to_dict()


def run_spectrum(sc: Scenario, k: int = 6, seed: int = 0, export=None) -> dict:
    fol = sc.foliation
    t = sc.t0
    N, h, V = fol.lapse_at(t), fol.metric_at(t), fol.potential_at(t)
    op = assemble_w2(N, h, V, sc.grid)
    summ = smallest_eigenpairs(op, k=k, seed=seed)
    q = op.potential
    out = {"provenance": "by-direct-check", "t": t, "n": op.n, **summ.to_dict(),
           "diagonal_bound": float(np.min(q)),
           "lambda_min_minus_diagonal_bound": summ.lambda_min - float(np.min(q)),
           "weighted_symmetry_defect": op.weighted_symmetry_defect()}
    if summ.positive_definite and op.n <= 512:
        si = operator_sqrt_inverse(op, summ)
        A = op.to_dense()
        nrm = np.linalg.norm(A, 2)
        out["sqrt_reconstruction_error"] = float(np.linalg.norm(si.sqrt @ si.sqrt - A, 2) / nrm)
        out["inverse_reconstruction_error"] = float(np.linalg.norm(si.inverse @ A - np.eye(op.n), 2))
    if export is not None:
        op.export_triplets(export)
    return out


def run_certify(sc: Scenario, seed: int = 0, threads: int = 1) -> ReportEnvelope:
    env = ReportEnvelope("certify", _scenario_echo(sc))
    jobs = [("certificate", lambda: _certificate_section(sc)),
            ("spectrum", lambda: run_spectrum(sc, seed=seed))]
    if sc.dimension == 1:
        jobs.append(("probe", lambda: run_probe(sc)))
    if sc.samples > 1 and not sc.static:
        jobs.append(("assumption_bounds", lambda: _bounds_section(sc)))
    _run_sections(env, jobs, threads)
    return env


def _certificate_section(sc: Scenario) -> dict:
    cert = esa_certificate(sc)
    d = cert.to_dict()
    d["provenance"] = {"completeness": cert.completeness.provenance,
                       "potential": "by-direct-check", "semi_boundedness": "by-direct-check",
                       "strict_positivity": "by-direct-check"}
    return d


def _bounds_section(sc: Scenario) -> dict:
    out = {}
    for conformal in (False, True):
        rep = check_assumption_bounds(sc.foliation, conformal=conformal)
        out["rescaled" if conformal else "original"] = rep.to_dict()
    out["provenance"] = "by-direct-check"
    return out


def run_probe(sc: Scenario) -> dict:
    verdict = weyl_classify_scenario(sc)
    d = verdict.to_dict()
    d["provenance"] = "probe"
    d["wronskian_drift"] = verdict.wronskian_drift
    return d


def run_evolve(sc: Scenario, time_steps: int | None = None, seed: int = 0, csv_stream=None) -> dict:
    fol = sc.foliation
    t0 = sc.t0
    t1 = sc.t1 if sc.t1 > sc.t0 else sc.t0 + 1.0
    limit = stability_limit(fol, t0, t1, seed=seed)
    if time_steps is None:
        time_steps = int(math.ceil((t1 - t0) / (0.9 * limit)))
    dt = (t1 - t0) / time_steps
    d1 = seeded_cauchy_data(sc.grid, seed)
    d2 = seeded_cauchy_data(sc.grid, seed + 1)
    traj = evolve_kg(d1, fol, t0, t1, dt, store_every=max(1, time_steps // 10), limit=limit)
    cons = conservation_check(d1, d2, fol, t0, t1, dt, check_stability=False)
    out = {"provenance": "by-direct-check", "t0": t0, "t1": t1, **traj.diagnostics,
           "final_phi_max": float(np.max(np.abs(traj.final.phi.values))),
           "final_pi_max": float(np.max(np.abs(traj.final.pi.values))),
           "symplectic": cons.to_dict()}
    if fol.is_static:
        op = assemble_w2(fol.lapse_at(t0), fol.metric_at(t0), fol.potential_at(t0), sc.grid)
        N = fol.lapse_at(t0).values
        e = [discrete_energy(s.phi.values, N * s.pi.values, op) for s in traj.states]
        out["energy_drift"] = float(np.max(np.abs(np.array(e) - e[0])) / abs(e[0])) if e[0] else 0.0
    if d1.support is not None and not all(ax.periodic for ax in sc.grid.axes):
        out["support_nodes"] = int(np.count_nonzero(d1.support))
    if csv_stream is not None:
        traj.to_csv(csv_stream)
    return out


def run_convergence(sc: Scenario, levels: int = 4, n0: int | None = None) -> dict:
    """Divergence vs expanded ``w^2`` on a smooth test function over dyadic grids.

    Errors are measured at interior nodes (two boundary layers dropped on
    truncated axes) against each other and against the symbolic operator.
    """
    if levels < 2:
        raise UsageError("convergence needs at least two levels")
    n0 = n0 or (64 if sc.dimension == 1 else 16)
    u = _test_function(sc.grid)
    wu = w2_continuum(sc.lapse, sc.metric, sc.potential, u, sc.dimension, sc.t0)
    rows = []
    for k in range(levels):
        n = n0 * 2 ** k
        s = sc.with_n(n)
        fol = s.foliation
        N, h, V = fol.lapse_at(s.t0), fol.metric_at(s.t0), fol.potential_at(s.t0)
        pts = s.grid.points()
        uv = u(*pts)
        a_div = assemble_w2(N, h, V, s.grid) @ uv
        a_exp = assemble_w2_expanded(N, h, V, s.grid) @ uv
        exact = wu(*pts, t=s.t0)
        mask = np.ones(s.grid.shape, dtype=bool)
        for a, ax in enumerate(s.grid.axes):
            if not ax.periodic:
                idx = [slice(None)] * s.dimension
                idx[a] = np.r_[0, 1, ax.n - 2, ax.n - 1]
                mask[tuple(idx)] = False
        mask = mask.ravel()
        scale = float(np.max(np.abs(exact[mask])))
        rows.append({"n": n, "h": s.grid.spacings[0],
                     "forms": float(np.max(np.abs(a_div - a_exp)[mask])),
                     "divergence_vs_continuum": float(np.max(np.abs(a_div - exact)[mask])),
                     "expanded_vs_continuum": float(np.max(np.abs(a_exp - exact)[mask])),
                     "scale": scale})

    def orders(key):
        vals = [r[key] for r in rows]
        return [float(math.log2(a / b)) if a > 0 and b > 0 else None for a, b in zip(vals, vals[1:])]

    exact_forms = all(r["forms"] <= 1e-11 * max(1.0, r["scale"]) for r in rows)
    out = {"provenance": "by-direct-check", "levels": rows,
           "orders": {"forms": None if exact_forms else orders("forms"),
                      "divergence_vs_continuum": orders("divergence_vs_continuum"),
                      "expanded_vs_continuum": orders("expanded_vs_continuum")},
           "forms_agree_exactly": exact_forms}
    return out


# ---------------------------------------------------------------------------
# text summaries

def _num(v, spec: str = ".6g") -> str:
    # non-finite values arrive as strings after sanitising
    return format(v, spec) if isinstance(v, (int, float)) else str(v)


def _summary(env: ReportEnvelope) -> str:
    head = f"cauchy-spectral {env.version}  {env.command}"
    if env.scenario:
        head += f"  scenario={env.scenario.get('name')}"
    lines = [head]
    s = env.sections
    if "certificate" in s:
        c = s["certificate"]
        comp = c["slices"][0]["completeness"]
        lines.append(f"  certificate: {c['overall']}  (completeness {comp['verdict']}, "
                     f"{comp['provenance']}; c = {c['c']}; strictly positive = {c['strictly_positive']})")
    if "spectrum" in s:
        sp_ = s["spectrum"]
        ev = ", ".join(_num(v) for v in sp_["eigenvalues"][:6])
        lines.append(f"  spectrum ({sp_['method']}): {ev}")
    if "probe" in s:
        p = s["probe"]
        ends = ", ".join(f"{e['side']}:{e['classification']}" for e in p["ends"]) or "compact slice"
        lines.append(f"  Weyl probe: esa = {p['esa']}  [{ends}]")
    if "assumption_bounds" in s:
        b = s["assumption_bounds"]["rescaled"]
        lines.append(f"  rescaled metric bounds: A = {_num(b['A'])}, D = {_num(b['D'])}")
    if "evolution" in s:
        e = s["evolution"]
        lines.append(f"  evolution: {e['steps']} steps of dt = {_num(e['dt'], '.4g')}; "
                     f"symplectic drift = {_num(e['symplectic']['drift'], '.3g')}")
    if "convergence" in s:
        c = s["convergence"]
        lines.append(f"  convergence: forms exact = {c['forms_agree_exactly']}; orders {c['orders']}")
    if "catalog" in s:
        for name, desc in s["catalog"].items():
            lines.append(f"  {name:26s} {desc}")
    for err in env.errors:
        lines.append(f"  ERROR in {err['section']}: {err['error']}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# entry point

def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", help="catalog name or path to a TOML scenario")
    common.add_argument("--out", help="write the JSON report to this path")
    common.add_argument("--json", action="store_true", help="print JSON instead of a text summary")
    common.add_argument("--grid-n", type=int, help="override the node count on every axis")
    common.add_argument("--time-steps", type=int, help="number of time steps for evolve")
    common.add_argument("--seed", type=int, default=0, help="seed for random fields and start vectors")
    common.add_argument("--levels", type=int, default=4, help="dyadic levels for converge")
    common.add_argument("--export-operator", help="write w^2 as (i, j, value) triplets (spectrum)")
    common.add_argument("--csv", help="write the phi trajectory as CSV (evolve)")
    p = argparse.ArgumentParser(prog="cauchy-spectral", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for verb, helptext in [("certify", "check the self-adjointness hypotheses"),
                           ("spectrum", "smallest eigenvalues of w^2"),
                           ("evolve", "integrate Klein-Gordon and track the symplectic form"),
                           ("probe", "Weyl limit-point/limit-circle probe (1D)"),
                           ("converge", "refinement study of the two w^2 assemblies"),
                           ("catalog", "list built-in scenarios")]:
        sub.add_parser(verb, parents=[common], help=helptext)
    return p


def _execute(args) -> ReportEnvelope:
    threads = thread_cap()
    if args.command == "catalog":
        env = ReportEnvelope("catalog", {})
        env.add("catalog", {name: spec.get("description", "") for name, spec in CATALOG.items()})
        return env
    if not args.scenario:
        raise UsageError(f"{args.command} needs --scenario")
    if args.grid_n is not None and args.grid_n < 4:
        raise UsageError("--grid-n must be at least 4")
    sc = resolve_scenario(args.scenario, args.grid_n)
    if args.command == "certify":
        return run_certify(sc, seed=args.seed, threads=threads)
    env = ReportEnvelope(args.command, _scenario_echo(sc))
    if args.command == "spectrum":
        def spectrum():
            if args.export_operator:
                with open(args.export_operator, "w") as fh:
                    return run_spectrum(sc, seed=args.seed, export=fh)
            return run_spectrum(sc, seed=args.seed)
        _run_sections(env, [("spectrum", spectrum)])
    elif args.command == "evolve":
        if args.time_steps is not None and args.time_steps < 1:
            raise UsageError("--time-steps must be positive")

        def evolve():
            if args.csv:
                with open(args.csv, "w") as fh:
                    return run_evolve(sc, args.time_steps, args.seed, fh)
            return run_evolve(sc, args.time_steps, args.seed)
        _run_sections(env, [("evolution", evolve)])
    elif args.command == "probe":
        if sc.dimension != 1:
            raise UsageError("probe works on one-dimensional scenarios")
        _run_sections(env, [("probe", lambda: run_probe(sc))])
    elif args.command == "converge":
        _run_sections(env, [("convergence", lambda: run_convergence(sc, args.levels, args.grid_n))])
    return env


def main(argv=None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        env = _execute(args)
    except (UsageError, ScenarioError) as exc:
        print(f"cauchy-spectral: error: {exc}", file=sys.stderr)
        return 2
    text = env.to_json()
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    sys.stdout.write(text if args.json else _summary(env))
    return 0 if env.ok else 1


if __name__ == "__main__":
    sys.exit(main())
