"""Geodesic completeness of the rescaled slice ``(Sigma, N^-2 h)``.

In one dimension an end is complete exactly when its metric length is
infinite, which is decided here from the closed-form metric by integrating
``sqrt(h~)`` over geometrically growing windows towards the end.  In two
dimensions geodesics are shot numerically; an escape in finite affine
parameter is evidence of incompleteness, while no escape proves nothing.
"""

from __future__ import annotations

import math
import warnings
from functools import lru_cache
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import sympy as sp
from scipy import integrate

from .expressions import Expr, X, Y
from .manifold import FieldError, Foliation, Grid, MetricExpr, MetricField

__all__ = [
    "EndVerdict", "CompletenessVerdict", "BoundsReport", "GeodesicResult",
    "CompletenessError", "GeodesicError",
    "end_length_1d", "geodesic_shoot", "check_assumption_bounds", "ghcomp_verdict",
    "classify_increments", "tilde_metric_expr",
]

CONVERGENT_RATIO = 0.9
DIVERGENT_RATIO = 0.98
TAIL_WINDOWS = 5


class CompletenessError(ValueError):
    pass


class GeodesicError(RuntimeError):
    pass


@dataclass
class EndVerdict:
    axis: int
    side: str
    verdict: str
    evidence: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"axis": self.axis, "side": self.side, "verdict": self.verdict,
                "evidence": self.evidence}


@dataclass
class CompletenessVerdict:
    ends: list[EndVerdict]
    provenance: str
    rule: str | None = None
    notes: list[str] = field(default_factory=list)
    verdict_override: str | None = None

    @property
    def verdict(self) -> str:
        if self.verdict_override is not None:
            return self.verdict_override
        kinds = {e.verdict for e in self.ends}
        if "incomplete" in kinds:
            return "incomplete"
        if kinds <= {"complete"}:
            return "complete"
        return "inconclusive"

    def to_dict(self) -> dict:
        return {"verdict": self.verdict, "provenance": self.provenance, "rule": self.rule,
                "ends": [e.to_dict() for e in self.ends], "notes": list(self.notes)}


# ---------------------------------------------------------------------------
# one dimension

def classify_increments(increments: Sequence[float], total: float | None = None,
                        windows: int = TAIL_WINDOWS) -> tuple[str, list[float]]:
    """Classify a sum of positive window increments as convergent or divergent.

    The windows must grow geometrically.  Ratios of successive increments
    below 0.9 over the last ``windows`` windows mean a geometric tail
    (convergent); ratios of at least 0.98 mean the increments do not shrink,
    i.e. at least logarithmic growth (divergent).
    """
    d = np.asarray(increments, dtype=float)
    if d.size and not np.all(np.isfinite(d)):
        return "divergent", []
    if d.size < windows + 1:
        return "inconclusive", []
    tail = d[-(windows + 1):]
    scale = total if total is not None else float(np.sum(d))
    if scale > 0 and np.all(tail <= 1e-14 * scale):
        return "convergent", [0.0] * windows
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(tail[:-1] > 0, tail[1:] / tail[:-1], 0.0)
    ratios = [float(r) for r in ratios]
    if all(r < CONVERGENT_RATIO for r in ratios):
        return "convergent", ratios
    if all(r >= DIVERGENT_RATIO for r in ratios):
        return "divergent", ratios
    return "inconclusive", ratios


def _window_edges(start: float, location: float, side: str, count: int, scale: float):
    if math.isinf(location):
        sign = 1.0 if side == "+" else -1.0
        return [start + sign * scale * (2.0 ** k - 1.0) for k in range(count + 1)]
    dist = location - start
    return [location - dist * 2.0 ** (-k) for k in range(count + 1)]


def end_length_1d(metric1d, side: str, location: float | None = None,
                  start: float | None = None, grid: Grid | None = None,
                  windows: int = 40, cutoffs: Sequence[float] | None = None) -> EndVerdict:
    """Complete/incomplete verdict for one end of a 1D rescaled metric.

    ``metric1d`` is the closed form of ``h~(x)`` (an :class:`Expr`, a string,
    or a field/metric carrying one).  ``side`` is ``"-"`` or ``"+"``.  The
    length is measured from ``start`` (default: the grid edge opposite the
    end) out to ``location`` (default: the grid's end descriptor).
    """
    expr = _closed_form_1d(metric1d)
    if side not in "-+" or len(side) != 1:
        raise ValueError("side must be '-' or '+'")
    if grid is not None:
        ax = grid.axes[0]
        if ax.periodic:
            raise CompletenessError("periodic axes have no ends")
        end = ax.ends[0 if side == "-" else 1]
        location = end.location if location is None else location
        start = (ax.lo if side == "+" else ax.hi) if start is None else start
        scale = 0.5 * (ax.hi - ax.lo)
    else:
        if location is None or start is None:
            raise ValueError("location and start are required without a grid")
        scale = 1.0
    if cutoffs is None:
        edges = _window_edges(float(start), float(location), side, windows, scale)
    else:
        edges = [float(start)] + [float(c) for c in cutoffs]
    root = sp.lambdify(X, sp.sqrt(expr.sym), modules="numpy")

    def density(s):
        with np.errstate(over="ignore", under="ignore", divide="ignore"):
            return float(root(s))

    def length(a, b):
        lo, hi = min(a, b), max(a, b)
        with warnings.catch_warnings():
            # far windows of a decaying density trip quad's roundoff detector
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            val, _ = integrate.quad(density, lo, hi, limit=200)
        return val if math.isfinite(val) else math.inf

    incs = []
    for a, b in zip(edges[:-1], edges[1:]):
        incs.append(length(a, b))
        if math.isinf(incs[-1]):
            break

    partial = list(np.cumsum(incs))
    kind, ratios = classify_increments(incs, partial[-1] if partial else None)
    evidence = {"start": float(start), "location": _json_float(location),
                "cutoffs": [_json_float(e) for e in edges[1:]],
                "partial_lengths": [_json_float(v) for v in partial], "tail_ratios": ratios}
    if kind == "convergent":
        r = max(ratios) if ratios else 0.0
        evidence["length_estimate"] = float(partial[-1] + incs[-1] * r / (1.0 - r))
        verdict = "incomplete"
    elif kind == "divergent":
        evidence["length_estimate"] = "inf"
        verdict = "complete"
    else:
        verdict = "inconclusive"
    return EndVerdict(0, side, verdict, evidence)


def _json_float(v: float):
    v = float(v)
    return v if math.isfinite(v) else ("inf" if v > 0 else "-inf")


def _closed_form_1d(metric1d) -> Expr:
    if isinstance(metric1d, MetricField):
        metric1d = metric1d.expr
    if isinstance(metric1d, MetricExpr):
        if metric1d.dimension != 1:
            raise CompletenessError("end_length_1d needs a one-dimensional metric")
        return metric1d.components[0][0]
    expr = getattr(metric1d, "expr", metric1d)
    if expr is None:
        raise CompletenessError("closed form of the metric is missing near the end")
    expr = Expr.coerce(expr)
    if expr.is_time_dependent:
        raise CompletenessError("fix the time before measuring end lengths")
    return expr


def tilde_metric_expr(fol: Foliation, t: float) -> MetricExpr:
    """Closed form of ``N(t)^-2 h(t)``."""
    if not fol.closed_form:
        raise CompletenessError("closed-form lapse and metric are required")
    N = fol.lapse.substitute_time(t)
    comps = [[c.substitute_time(t) for c in row] for row in fol.metric.components]
    return MetricExpr(comps).scaled(N ** -2)


# ---------------------------------------------------------------------------
# two dimensions: geodesic shooting

@dataclass
class GeodesicResult:
    affine: np.ndarray
    points: np.ndarray
    escaped: bool
    escape_parameter: float | None
    speed_drift: float

    def to_dict(self) -> dict:
        return {"escaped": self.escaped, "escape_parameter": self.escape_parameter,
                "final_point": [float(v) for v in self.points[-1]],
                "affine_reached": float(self.affine[-1]), "speed_drift": self.speed_drift}


def _christoffel(metric: MetricExpr):
    return _christoffel_of(sp.ImmutableMatrix(metric.matrix()))


@lru_cache(maxsize=32)
def _christoffel_of(g: sp.ImmutableMatrix):
    ginv = g.inv()
    coords = (X, Y)
    gam = [[[sp.simplify(sum(ginv[k, l] * (sp.diff(g[j, l], coords[i]) + sp.diff(g[i, l], coords[j])
                                          - sp.diff(g[i, j], coords[l])) for l in range(2)) / 2)
             for j in range(2)] for i in range(2)] for k in range(2)]
    fg = sp.lambdify((X, Y), g, modules="numpy")
    fgam = sp.lambdify((X, Y), gam, modules="numpy")
    return (lambda x, y: np.asarray(fg(x, y), dtype=float),
            lambda x, y: np.asarray(fgam(x, y), dtype=float))


def geodesic_shoot(metric: MetricExpr, x0: Sequence[float], v0: Sequence[float], t_max: float,
                   dt: float, grid: Grid | None = None, escape_distance: float = 10.0,
                   max_coordinate_step: float = 0.01, min_step: float = 1e-13) -> GeodesicResult:
    """Integrate a unit-speed geodesic of a closed-form 2D metric with RK4.

    The step is ``min(dt, max_coordinate_step / |dx/ds|)`` so coordinate
    blow-up in finite affine parameter is resolved.  The geodesic escapes
    when it passes a finite end location of a non-periodic axis or moves
    ``escape_distance`` beyond the grid towards an infinite end.  Periodic
    axes wrap.
    """
    if metric.dimension != 2:
        raise CompletenessError("geodesic_shoot works on 2D metrics")
    if metric.is_time_dependent:
        raise CompletenessError("fix the time before shooting geodesics")
    gfun, gamfun = _christoffel(metric)
    x = np.asarray(x0, dtype=float).copy()
    v = np.asarray(v0, dtype=float).copy()
    v /= math.sqrt(v @ gfun(*x) @ v)

    bounds = []
    if grid is not None:
        for ax in grid.axes:
            if ax.periodic:
                bounds.append(("periodic", ax.lo, ax.hi))
            else:
                lo = ax.ends[0].location if math.isfinite(ax.ends[0].location) else ax.lo - escape_distance
                hi = ax.ends[1].location if math.isfinite(ax.ends[1].location) else ax.hi + escape_distance
                bounds.append(("open", lo, hi))

    def rhs(state):
        p, w = state[:2], state[2:]
        G = gamfun(*p)
        acc = -np.einsum("kij,i,j->k", G, w, w)
        return np.r_[w, acc]

    s = 0.0
    state = np.r_[x, v]
    affine, pts = [0.0], [x.copy()]
    drift = 0.0
    escaped, s_escape = False, None
    while t_max - s > 1e-12 * max(1.0, t_max):
        speed = np.max(np.abs(state[2:]))
        h = min(dt, t_max - s, max_coordinate_step / max(speed, 1e-300))
        if h < min_step:
            raise GeodesicError(f"step size underflow at s={s:.6g}, point {state[:2]}")
        k1 = rhs(state)
        k2 = rhs(state + 0.5 * h * k1)
        k3 = rhs(state + 0.5 * h * k2)
        k4 = rhs(state + h * k3)
        state = state + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        s += h
        if not np.all(np.isfinite(state)):
            raise GeodesicError(f"geodesic left the metric's domain at s={s:.6g}")
        for a, (kind, lo, hi) in enumerate(bounds):
            if kind == "periodic":
                state[a] = lo + np.mod(state[a] - lo, hi - lo)
            elif state[a] <= lo or state[a] >= hi:
                escaped, s_escape = True, s
        p, w = state[:2], state[2:]
        drift = max(drift, abs(w @ gfun(*p) @ w - 1.0))
        affine.append(s)
        pts.append(p.copy())
        if escaped:
            break
    return GeodesicResult(np.asarray(affine), np.asarray(pts), escaped, s_escape, float(drift))


# ---------------------------------------------------------------------------
# bounds on lapse and metric over a time window

@dataclass
class BoundsReport:
    alpha_B: float
    alpha_C: float
    A: float
    D: float
    lapse_unbounded: bool
    metric_unbounded: bool
    reference_time: float
    conformal: bool
    exhaustive: bool
    heuristic: bool = True

    @property
    def bounded(self) -> bool:
        return not (self.lapse_unbounded or self.metric_unbounded)

    def to_dict(self) -> dict:
        return {"alpha_B": self.alpha_B, "alpha_C": self.alpha_C, "A": self.A, "D": self.D,
                "lapse_unbounded": self.lapse_unbounded, "metric_unbounded": self.metric_unbounded,
                "reference_time": self.reference_time, "conformal": self.conformal,
                "window_exhaustive": self.exhaustive,
                "unboundedness_detection": "heuristic, relative to the sampled window"}


def _rayleigh_range(ht: np.ndarray, h0: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Min/max of ``h_t(u,u) / h_0(u,u)`` per node."""
    if ht.shape[1] == 1:
        q = ht[:, 0, 0] / h0[:, 0, 0]
        return q, q
    L = np.linalg.cholesky(h0)
    Linv = np.linalg.inv(L)
    M = Linv @ ht @ np.swapaxes(Linv, 1, 2)
    ev = np.linalg.eigvalsh(0.5 * (M + np.swapaxes(M, 1, 2)))
    lo, hi = ev[:, 0].copy(), ev[:, -1].copy()
    same = np.all(ht == h0, axis=(1, 2))
    lo[same] = 1.0
    hi[same] = 1.0
    return lo, hi


def _grows_at_edge(values: np.ndarray, times: np.ndarray, factor: float = 10.0) -> bool:
    """Monotone growth by more than ``factor`` that has not saturated at a window edge."""
    v = np.asarray(values, dtype=float)
    if v.size < 4 or np.min(v) <= 0 or np.max(v) / np.min(v) <= factor:
        return False
    logv = np.log(v)
    span = times[-1] - times[0]
    third = max(2, v.size // 3)
    for lv, tt in ((logv, times), (logv[::-1], times[::-1])):
        seg, tseg = lv[-third:], tt[-third:]
        if lv[-1] < np.max(lv) - 1e-12:
            continue
        if np.any(np.diff(seg) < -1e-12):
            continue
        mean_rate = (lv[-1] - np.min(lv)) / span
        edge_rate = (seg[-1] - seg[0]) / abs(tseg[-1] - tseg[0])
        if mean_rate > 0 and edge_rate >= 0.5 * mean_rate:
            return True
    return False


def check_assumption_bounds(fol: Foliation, conformal: bool = False,
                            exhaustive: bool = False) -> BoundsReport:
    """Lapse bounds ``alpha_B <= N <= alpha_C`` and metric equivalence ``A, D``.

    ``A`` and ``D`` are the extreme generalised eigenvalues of
    ``(h(t), h(t_ref))`` over nodes and sampled times, with ``t_ref = 0`` when
    sampled and the first sample otherwise.  With ``conformal=True`` the
    check runs on ``N^-2 h`` and the lapse of the rescaled metric is 1.
    """
    times = fol.times
    if times.size < 2:
        raise FieldError("bounds need at least two time samples")
    ref_idx = int(np.argmin(np.abs(times))) if times[0] <= 0 <= times[-1] else 0
    t_ref = float(times[ref_idx])

    def slice_metric(t):
        h = fol.metric_at(float(t)).values
        if conformal:
            N = fol.lapse_at(float(t)).values
            h = h * (N ** -2.0)[:, None, None]
        return h

    h_ref = slice_metric(t_ref)
    nmin, nmax, qmin, qmax = [], [], [], []
    for t in times:
        N = fol.lapse_at(float(t)).values
        lo, hi = _rayleigh_range(slice_metric(t), h_ref)
        nmin.append(1.0 if conformal else float(N.min()))
        nmax.append(1.0 if conformal else float(N.max()))
        qmin.append(float(lo.min()))
        qmax.append(float(hi.max()))
    nmin, nmax = np.array(nmin), np.array(nmax)
    qmin, qmax = np.array(qmin), np.array(qmax)
    lapse_unb = metric_unb = False
    if not exhaustive:
        lapse_unb = _grows_at_edge(nmax, times) or _grows_at_edge(1.0 / nmin, times)
        metric_unb = _grows_at_edge(qmax, times) or _grows_at_edge(1.0 / qmin, times)
    return BoundsReport(float(nmin.min()), float(nmax.max()), float(qmin.min()),
                        float(qmax.max()), lapse_unb, metric_unb, t_ref, conformal, exhaustive)


# ---------------------------------------------------------------------------
# combined verdict

def _direct_check(fol: Foliation, t0: float, shots: int, t_max: float) -> CompletenessVerdict:
    grid = fol.grid
    if all(ax.periodic for ax in grid.axes):
        return CompletenessVerdict([], "by-direct-check", "compact-slice",
                                   ["all axes periodic: the slice is compact"])
    try:
        metric = tilde_metric_expr(fol, t0)
    except CompletenessError as exc:
        return CompletenessVerdict([], "inconclusive", None, [str(exc)], "inconclusive")
    if grid.dimension == 1:
        ends = [end_length_1d(metric, side, grid=grid) for side in "-+"]
        prov = "by-direct-check" if all(e.verdict != "inconclusive" for e in ends) else "inconclusive"
        return CompletenessVerdict(ends, prov)
    centre = [0.5 * (ax.lo + ax.hi) for ax in grid.axes]
    ends = []
    results = []
    for k in range(shots):
        ang = 2 * math.pi * k / shots
        try:
            res = geodesic_shoot(metric, centre, [math.cos(ang), math.sin(ang)], t_max, 1e-2, grid)
        except GeodesicError as exc:
            results.append({"direction": ang, "error": str(exc)})
            continue
        results.append({"direction": ang, **res.to_dict()})
        if res.escaped:
            ends.append(EndVerdict(-1, f"shot@{ang:.4f}", "incomplete", res.to_dict()))
    if ends:
        return CompletenessVerdict(ends, "by-direct-check", "geodesic-escape",
                                   [f"{len(ends)} of {shots} geodesics escaped"])
    return CompletenessVerdict([], "inconclusive", "geodesic-shooting",
                               ["no geodesic escaped; shooting cannot certify completeness"],
                               "inconclusive")


def ghcomp_verdict(fol: Foliation, globally_hyperbolic: bool = True, t0: float | None = None,
                   shots: int = 8, t_max: float = 5.0) -> CompletenessVerdict:
    """Completeness of ``(Sigma, N^-2 h)`` at ``t0``.

    When the spacetime is asserted globally hyperbolic, static slices and
    rescaled metrics that satisfy the two-sided bound over the window are
    complete by theorem.  A direct check always runs as a cross-check; if it
    finds an incomplete end the assertion is contradicted and the direct
    verdict wins.
    """
    t0 = float(fol.times[0]) if t0 is None else float(t0)
    direct = _direct_check(fol, t0, shots, t_max)
    theorem = None
    if globally_hyperbolic:
        if fol.is_static:
            theorem = CompletenessVerdict(direct.ends, "by-theorem", "static-spacetime",
                                          verdict_override="complete")
        elif fol.times.size >= 2:
            bounds = check_assumption_bounds(fol, conformal=True)
            if bounds.bounded:
                theorem = CompletenessVerdict(direct.ends, "by-theorem", "conformal-metric-bounds",
                                              [f"A={bounds.A:.6g}, D={bounds.D:.6g} on the sampled window"],
                                              "complete")
    if theorem is not None:
        if direct.verdict == "incomplete":
            direct.notes.append("direct check contradicts the asserted global hyperbolicity")
            return direct
        theorem.notes.extend(direct.notes)
        return theorem
    if direct.verdict == "inconclusive":
        direct.provenance = "inconclusive"
    return direct
