"""Potential hypotheses and the aggregated self-adjointness certificate.

The certificate checks, slice by slice, that the rescaled slice is
complete, that the positive part of ``N^2 V`` is locally square-integrable
for the rescaled measure, that ``w^2`` is bounded below, and whether ``V`` is
strictly positive.  Discrete eigenvalues are indicators, not proofs, of
the continuum statements; the report says which evidence was used.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
import sympy as sp
from scipy import integrate

from .completeness import CompletenessVerdict, classify_increments, ghcomp_verdict
from .expressions import T, X, Y, Expr, Singularity
from .manifold import Grid, ScalarField, WeightedManifold, tilde_manifold
from .operators import SymmetricSparseOperator, assemble_w2
from .spectral import ConvergenceError, refinement_report, smallest_eigenpairs

__all__ = ["PotentialClassification", "SingularityReport", "classify_l2loc", "SemiBound",
           "semiboundedness_bound", "tail_lower_bound", "SliceCertificate", "CertificateReport",
           "esa_certificate", "HypothesisError"]

TIE_TOL = 1e-10
REFINE_LIMIT = 4096


class HypothesisError(ValueError):
    pass


@dataclass
class SingularityReport:
    location: tuple
    power: float
    dimension: int
    sign: str
    analytic: str
    numeric: str
    verdict: str
    ratios: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"location": list(self.location), "power": self.power, "dimension": self.dimension,
                "sign": self.sign, "analytic": self.analytic, "numeric": self.numeric,
                "verdict": self.verdict, "tail_ratios": list(self.ratios)}


@dataclass
class PotentialClassification:
    v_plus: np.ndarray = field(repr=False)
    v_minus: np.ndarray = field(repr=False)
    l2loc: str
    singularities: list[SingularityReport] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        vp = self.v_plus[np.isfinite(self.v_plus)]
        vm = self.v_minus[np.isfinite(self.v_minus)]
        return {"l2loc": self.l2loc,
                "v_plus_max": float(vp.max()) if vp.size else None,
                "v_minus_min": float(vm.min()) if vm.size else None,
                "singularities": [s.to_dict() for s in self.singularities],
                "notes": list(self.notes)}


def _closed(field_or_expr, name: str) -> Expr:
    expr = field_or_expr.expr if isinstance(field_or_expr, ScalarField) else field_or_expr
    if expr is None:
        raise HypothesisError(f"{name}: a singularity marker needs a closed-form expression")
    return Expr.coerce(expr)


def _annulus_integral(f, centre, r_in, r_out, dim):
    """Integral of ``f`` over ``r_in < |x - centre| < r_out``."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        if dim == 1:
            x0 = centre[0]
            right, _ = integrate.quad(lambda s: f(x0 + s), r_in, r_out, limit=200)
            left, _ = integrate.quad(lambda s: f(x0 - s), r_in, r_out, limit=200)
            return right + left
        x0, y0 = centre
        val, _ = integrate.dblquad(
            lambda th, r: r * f(x0 + r * math.cos(th), y0 + r * math.sin(th)),
            r_in, r_out, 0.0, 2 * math.pi, epsabs=0.0, epsrel=1e-8)
        return val


def _singularity_report(sing: Singularity, q_expr: Expr, m_expr: Expr | None, m_node: float,
                        grid: Grid, levels: int, t: float = 0.0) -> SingularityReport:
    d = grid.dimension
    loc = tuple(float(c) for c in np.atleast_1d(sing.location))
    p = float(sing.power)
    analytic = "integrable" if 2 * p < d else "non-integrable"
    r0 = 0.25 * min(ax.hi - ax.lo for ax in grid.axes)
    q_fun = sp.lambdify((X, Y)[:d], q_expr.sym.subs(T, t), "numpy")
    m_fun = sp.lambdify((X, Y)[:d], m_expr.sym.subs(T, t), "numpy") if m_expr is not None else None

    def integrand(*c):
        with np.errstate(all="ignore"):
            qv = float(q_fun(*c))
            mv = float(m_fun(*c)) if m_fun is not None else m_node
        return max(qv, 0.0) ** 2 * mv if sign == "positive" else min(qv, 0.0) ** 2 * mv

    probe = np.array(loc) + r0 * 2.0 ** -20 * np.r_[1.0, 0.0][:d]
    with np.errstate(all="ignore"):
        sign = "positive" if float(q_fun(*probe)) >= 0 else "negative"
    incs = [_annulus_integral(integrand, loc, r0 * 2.0 ** -(k + 1), r0 * 2.0 ** -k, d)
            for k in range(levels)]
    # increments are ordered towards the singular point, the direction of the tail
    kind, ratios = classify_increments(incs)
    numeric = {"convergent": "integrable", "divergent": "non-integrable"}.get(kind, "inconclusive")
    if numeric == "inconclusive":
        verdict = analytic
    elif numeric == analytic:
        verdict = analytic
    else:
        verdict = "inconclusive"
    return SingularityReport(loc, p, d, sign, analytic, numeric, verdict, ratios)


def classify_l2loc(V, N, wm_tilde: WeightedManifold, levels: int = 24,
                   t: float = 0.0) -> PotentialClassification:
    """Split ``N^2 V`` into signed parts and classify local square-integrability.

    Smooth samples on the grid are locally bounded, hence integrable.  At a
    marked singularity ``|x - x0|^-p`` the local criterion ``2p < d`` is
    cross-checked by integrating ``(N^2 V)^2 m~`` over dyadic annuli shrinking
    onto ``x0``.  Only singularities in the positive part matter for the
    local hypothesis; negative ones are reported and left to the
    semi-boundedness check.
    """
    grid = wm_tilde.grid
    if not isinstance(V, ScalarField):
        V = ScalarField.from_expr(V, grid)
    if not isinstance(N, ScalarField):
        N = ScalarField.from_expr(N, grid)
    q = N.values ** 2 * V.values
    v_plus = np.where(q > 0, q, 0.0)
    v_minus = np.where(q < 0, q, 0.0)
    notes = []
    reports = []
    for sing in V.singularities:
        q_expr = _closed(N, "lapse") ** 2 * _closed(V, "potential")
        m_expr = wm_tilde.weight.expr
        nearest = int(np.argmin(sum((c - x) ** 2 for c, x in zip(grid.points(), np.atleast_1d(sing.location)))))
        reports.append(_singularity_report(sing, q_expr, m_expr, float(wm_tilde.weight.values[nearest]),
                                           grid, levels, t))
    relevant = [r.verdict for r in reports if r.sign == "positive"]
    for r in reports:
        if r.sign == "negative":
            notes.append(f"singularity at {r.location} lies in V_-; local integrability of V_+ "
                         "is unaffected")
    if "non-integrable" in relevant:
        verdict = "non-integrable"
    elif "inconclusive" in relevant:
        verdict = "inconclusive"
    elif not reports and not np.all(np.isfinite(q)):
        verdict = "inconclusive"
        notes.append("non-finite potential samples without a singularity marker")
    else:
        verdict = "integrable"
    return PotentialClassification(v_plus, v_minus, verdict, reports, notes)


# ---------------------------------------------------------------------------
# semi-boundedness

class SemiBound(NamedTuple):
    c: float
    method: str
    diagonal: float
    lambda_min: float | None


def semiboundedness_bound(w2: SymmetricSparseOperator, wm_tilde: WeightedManifold | None = None,
                          k: int = 1) -> SemiBound:
    """Lower bound ``c`` for ``w^2``: the larger of ``min N^2 V`` and ``lambda_min``.

    The diagonal bound holds because the discrete ``-Delta~`` is positive
    semi-definite.  If the eigensolver fails the diagonal bound is returned
    alone.
    """
    if w2.potential is None:
        raise HypothesisError("w2 carries no potential samples")
    q = np.asarray(w2.potential, dtype=float)
    if not np.all(np.isfinite(q)):
        return SemiBound(-math.inf, "none (non-finite potential samples)", -math.inf, None)
    diag = float(q.min())
    try:
        lam = smallest_eigenpairs(w2, k=k).lambda_min
    except (ConvergenceError, np.linalg.LinAlgError, RuntimeError):
        return SemiBound(diag, "diagonal (eigensolver failed)", diag, None)
    if abs(lam - diag) <= TIE_TOL * max(1.0, abs(diag)):
        method = "diagonal=eigenvalue"
    else:
        method = "eigenvalue" if lam > diag else "diagonal"
    return SemiBound(max(diag, lam), method, diag, float(lam))


def tail_lower_bound(q_expr: Expr, grid: Grid, t: float = 0.0, steps: int = 24) -> tuple[str, float]:
    """Behaviour of a closed-form ``N^2 V`` beyond the grid towards its ends.

    Samples along each non-periodic axis from the boundary nodes outwards
    (geometrically towards infinite ends, halving the distance to finite
    ones).  Returns ``("bounded", lower)`` when the decrease beyond the grid
    is summable or absent, ``("unbounded", -inf)`` when it keeps growing, and
    ``("inconclusive", min)`` otherwise.
    """
    lower = math.inf
    status = "bounded"
    pts = grid.mesh()
    for a, ax in enumerate(grid.axes):
        if ax.periodic:
            continue
        for side, end in zip((0, -1), ax.ends):
            base = [np.take(c, side, axis=a).ravel() for c in pts]
            edge = ax.lo if side == 0 else ax.hi
            sign = -1.0 if side == 0 else 1.0
            scale = 0.5 * (ax.hi - ax.lo)
            if math.isinf(end.location):
                coords = [edge + sign * scale * (2.0 ** k - 1.0) for k in range(steps + 1)]
            else:
                coords = [end.location - (end.location - edge) * 2.0 ** -k for k in range(steps + 1)]
            mins = []
            for c in coords:
                args = list(base)
                args[a] = np.full_like(base[a], c)
                with np.errstate(all="ignore"):
                    vals = np.asarray(q_expr(*args, t=t), dtype=float)
                vals = np.where(np.isnan(vals), np.inf, vals)
                mins.append(float(np.min(vals)))
            mins = np.array(mins)
            lower = min(lower, float(np.min(mins)))
            if np.any(mins == -np.inf):
                return "unbounded", -math.inf
            with np.errstate(invalid="ignore"):
                drops = np.nan_to_num(np.maximum(mins[:-1] - mins[1:], 0.0), nan=0.0)
            if drops[-6:].sum() == 0:
                continue
            kind, _ = classify_increments(drops, total=float(np.sum(drops)))
            if kind == "divergent":
                return "unbounded", -math.inf
            if kind == "inconclusive":
                status = "inconclusive"
    return status, lower


# ---------------------------------------------------------------------------
# certificate

@dataclass
class SliceCertificate:
    t: float
    completeness: CompletenessVerdict
    potential: PotentialClassification
    semibound: SemiBound
    semibounded: str
    tail: tuple
    epsilon: float
    strictly_positive: bool
    refinement: dict | None = None

    def to_dict(self) -> dict:
        c = self.semibound
        return {
            "t": self.t,
            "completeness": self.completeness.to_dict(),
            "potential": self.potential.to_dict(),
            "semi_boundedness": {"c": _f(c.c), "method": c.method, "diagonal_bound": _f(c.diagonal),
                                 "lambda_min": _f(c.lambda_min), "status": self.semibounded,
                                 "beyond_grid": {"status": self.tail[0], "lower": _f(self.tail[1])},
                                 "note": "lambda_min is a discrete indicator, not a continuum proof"},
            "strict_positivity": {"positive": self.strictly_positive, "epsilon": _f(self.epsilon),
                                  "note": "minimum over grid nodes only"},
            "refinement": self.refinement,
        }


def _f(v):
    if v is None:
        return None
    v = float(v)
    if math.isfinite(v):
        return v
    return "nan" if math.isnan(v) else ("inf" if v > 0 else "-inf")


@dataclass
class CertificateReport:
    scenario: str
    slices: list[SliceCertificate]
    overall: str
    failed: str | None = None

    @property
    def c(self) -> float:
        return min(s.semibound.c for s in self.slices)

    @property
    def strictly_positive(self) -> bool:
        return all(s.strictly_positive for s in self.slices)

    @property
    def epsilon(self) -> float:
        return min(s.epsilon for s in self.slices)

    @property
    def completeness(self) -> CompletenessVerdict:
        return self.slices[0].completeness

    @property
    def potential(self) -> PotentialClassification:
        return self.slices[0].potential

    def to_dict(self) -> dict:
        return {"scenario": self.scenario, "overall": self.overall, "failed_hypothesis": self.failed,
                "c": _f(self.c), "strictly_positive": self.strictly_positive,
                "epsilon": _f(self.epsilon), "slices": [s.to_dict() for s in self.slices]}


def _certify_slice(sc, t: float, refine: bool) -> SliceCertificate:
    fol = sc.foliation
    N, h, V = fol.lapse_at(t), fol.metric_at(t), fol.potential_at(t)
    wt = tilde_manifold(N, h, sc.grid)
    comp = ghcomp_verdict(fol, sc.globally_hyperbolic, t)
    pot = classify_l2loc(V, N, wt, t=t)
    w2 = assemble_w2(N, h, V, sc.grid)
    sb = semiboundedness_bound(w2, wt)
    q_expr = fol.lapse ** 2 * fol.potential if isinstance(fol.lapse, Expr) and \
        isinstance(fol.potential, Expr) else None
    if q_expr is not None:
        tail = tail_lower_bound(q_expr, sc.grid, t)
    else:
        tail = ("inconclusive", math.nan)
    if not math.isfinite(sb.diagonal):
        status = "inconclusive"
    elif tail[0] == "bounded" or all(ax.periodic for ax in sc.grid.axes):
        status = "verified"
        if math.isfinite(tail[1]) and tail[1] < sb.diagonal:
            sb = sb._replace(diagonal=tail[1], c=max(tail[1], sb.lambda_min or -math.inf),
                             method=sb.method + " (beyond-grid samples lower the diagonal bound)")
    else:
        status = "inconclusive"
    eps = float(np.min(V.values))
    refinement = None
    if refine and sc.grid.size * 2 ** sc.dimension <= REFINE_LIMIT and math.isfinite(sb.diagonal):
        fine = sc.refined(2)
        ff = fine.foliation
        try:
            lam_f = smallest_eigenpairs(assemble_w2(ff.lapse_at(t), ff.metric_at(t), ff.potential_at(t),
                                                    fine.grid), k=1).lambda_min
            if sb.lambda_min is not None:
                refinement = refinement_report([sb.lambda_min, lam_f])
        except (ConvergenceError, RuntimeError):
            refinement = None
    return SliceCertificate(float(t), comp, pot, sb, status, tail, eps,
                            bool(np.isfinite(eps) and eps > 0), refinement)


def esa_certificate(scenario, slices: Sequence[float] | None = None,
                    refine: bool = True) -> CertificateReport:
    """Aggregate the hypotheses for essential self-adjointness of ``w^2``.

    Each time in ``slices`` (default ``t0``) is a separate Cauchy surface.
    The overall verdict is ``hypotheses-verified`` only when every slice
    passes completeness, local integrability and semi-boundedness; a
    definite failure names the hypothesis; anything else is inconclusive.
    Strict positivity is reported but does not enter the verdict.
    """
    times = [scenario.t0] if slices is None else [float(t) for t in slices]
    if scenario.foliation.is_static:
        times = times[:1]
    certs = [_certify_slice(scenario, t, refine) for t in times]
    failed = None
    inconclusive = False
    for s in certs:
        if s.completeness.verdict == "incomplete":
            failed = failed or "completeness"
        elif s.completeness.verdict != "complete":
            inconclusive = True
        if s.potential.l2loc == "non-integrable":
            failed = failed or "potential-l2loc"
        elif s.potential.l2loc != "integrable":
            inconclusive = True
        if s.semibounded != "verified":
            inconclusive = True
    if failed:
        overall = f"hypothesis-failed({failed})"
    elif inconclusive:
        overall = "inconclusive"
    else:
        overall = "hypotheses-verified"
    return CertificateReport(scenario.name, certs, overall, failed)
