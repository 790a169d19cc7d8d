"""Weyl limit-point / limit-circle probe for one-dimensional slices.

On a 1D slice ``w^2 - i`` reduces to the Sturm-Liouville problem::

    (P u')' = m (q - i) u,   P = N / sqrt(h),  m = sqrt(h) / N,  q = N^2 V

``w^2`` is essentially self-adjoint on compactly supported smooth functions
iff both ends are limit-point, i.e. not every solution is square-integrable
for ``m dx`` near the end.  Two independent solutions are integrated from
an interior anchor towards each end; their windowed ``L^2(m dx)`` norms are
tested for geometric decay (square-integrable) or growth.

The solutions are carried as a fundamental matrix times ``exp(s)``, with the
matrix renormalised after every chunk so blow-up never overflows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import sympy as sp
from scipy.integrate import solve_ivp

from .expressions import T, X, Expr
from .manifold import Grid, MetricExpr

__all__ = ["WeylVerdict", "WeylEnd", "weyl_classify", "weyl_classify_scenario", "ProbeError"]

CONVERGENT_RATIO = 0.9
TAIL_WINDOWS = 5
GROWTH = 1.5
CHUNKS = 8


class ProbeError(RuntimeError):
    pass


class _Budget(Exception):
    def __init__(self, log_incs=None, drift=math.nan):
        super().__init__()
        self.log_incs = log_incs
        self.drift = drift


@dataclass
class WeylEnd:
    side: str
    classification: str
    solutions: list[str]
    log_increments: list[list[float]]
    ratios: list[list[float]]
    cutoffs: list[float]
    wronskian_drift: float
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"side": self.side, "classification": self.classification,
                "solutions": list(self.solutions), "cutoffs": list(self.cutoffs),
                "log_norm_increments": self.log_increments, "tail_ratios": self.ratios,
                "wronskian_drift": self.wronskian_drift, "notes": list(self.notes)}


@dataclass
class WeylVerdict:
    ends: list[WeylEnd]
    anchor: float
    spectral_parameter: complex = 1j

    @property
    def esa(self) -> bool | None:
        kinds = [e.classification for e in self.ends]
        if all(k == "limit-point" for k in kinds):
            return True
        if "limit-circle" in kinds:
            return False
        return None

    @property
    def wronskian_drift(self) -> float:
        return max((e.wronskian_drift for e in self.ends), default=0.0)

    def to_dict(self) -> dict:
        return {"kind": "numerical evidence (Weyl alternative at spectral parameter i)",
                "esa": self.esa, "anchor": self.anchor,
                "ends": [e.to_dict() for e in self.ends]}


def _tail_class(log_incs: Sequence[float]) -> tuple[str, list[float]]:
    li = np.asarray(log_incs, dtype=float)
    if li.size < TAIL_WINDOWS + 1:
        return "inconclusive", []
    with np.errstate(over="ignore"):
        ratios = np.exp(np.diff(li[-(TAIL_WINDOWS + 1):]))
    ratios = [float(r) for r in ratios]
    if all(r < CONVERGENT_RATIO for r in ratios):
        return "square-integrable", ratios
    if all(r > 1.0 / CONVERGENT_RATIO for r in ratios):
        return "not-square-integrable", ratios
    return "inconclusive", ratios


def _cutoffs(anchor: float, location: float, side: str, count: int, width: float) -> list[float]:
    sign = 1.0 if side == "+" else -1.0
    if math.isinf(location):
        return [anchor + sign * width * GROWTH ** k for k in range(count)]
    dist = abs(location - anchor)
    return [location - sign * dist * GROWTH ** -(k + 1) for k in range(count)]


def _coefficients(N: Expr, h, V: Expr, t: float):
    hs = Expr.coerce(h).sym if not isinstance(h, MetricExpr) else h.matrix()[0, 0]
    Ns, Vs = Expr.coerce(N).sym, Expr.coerce(V).sym
    root = sp.sqrt(hs)
    exprs = [Ns / root, root / Ns, Ns ** 2 * Vs]
    return [sp.lambdify(X, e.subs(T, t), modules="math") for e in exprs]


def _integrate_end(P, m, q, anchor, cutoffs, side, step, rtol, budget):
    """Norm increments (log) per window for the two solutions, plus Wronskian drift."""
    Y = np.array([1.0 + 0j, 0.0, 0.0, 1.0 + 0j])  # (u1, v1, u2, v2), v = P u'
    calls = [0]

    def rhs(x, y):
        calls[0] += 1
        if calls[0] > budget:
            raise _Budget
        Px, mx, qx = P(x), m(x), q(x)
        c = mx * (qx - 1j)
        u1, v1, u2, v2 = y[0], y[1], y[2], y[3]
        return np.array([v1 / Px, c * u1, v2 / Px, c * u2, mx * abs(u1) ** 2, mx * abs(u2) ** 2])

    log_incs = [[], []]
    edges = [anchor] + list(cutoffs)
    state = {"drift": 0.0}
    try:
        _windows(rhs, Y, edges, step, rtol, log_incs, state)
    except _Budget as exc:
        raise _Budget(log_incs, state["drift"]) from None
    return log_incs, state["drift"], calls[0]


def _windows(rhs, Y, edges, step, rtol, log_incs, state):
    W0 = 1.0
    log_scale = 0.0
    drift = 0.0
    chunk = (edges[1] - edges[0]) / CHUNKS
    for a, b in zip(edges[:-1], edges[1:]):
        acc = [-math.inf, -math.inf]  # log of the norm accumulated in this window
        direction = 1.0 if b > a else -1.0
        c0 = a
        chunk = direction * min(abs(chunk), abs(b - a) / CHUNKS)
        while direction * (b - c0) > 1e-14 * max(1.0, abs(b)):
            c1 = c0 + chunk
            if direction * (c1 - b) > 0:
                c1 = b
            y0 = np.r_[Y, 0.0, 0.0].astype(complex)
            with np.errstate(all="ignore"):
                sol = solve_ivp(rhs, (c0, c1), y0, method="DOP853", rtol=rtol,
                                atol=1e-14 * rtol, max_step=step)
            y = sol.y[:, -1]
            grown = float(np.max(np.abs(y[:4]))) if np.all(np.isfinite(y)) else math.inf
            if not sol.success or not math.isfinite(grown) or grown > 1e60 or abs(y[4]) > 1e120:
                chunk = 0.5 * (c1 - c0)
                if abs(chunk) < 1e-12 * max(1.0, abs(c0)):
                    raise ProbeError(f"solution growth not resolvable near x={c0:.6g}")
                continue
            Y = y[:4]
            with np.errstate(divide="ignore"):
                acc = [float(np.logaddexp(acc[j], np.log(abs(y[4 + j].real)) + 2 * log_scale))
                       for j in range(2)]
            u1, v1, u2, v2 = Y
            terms = abs(u1 * v2) + abs(u2 * v1)
            W = u1 * v2 - u2 * v1
            drift = max(drift, abs(W - W0 * math.exp(-2 * log_scale)) / terms)
            state["drift"] = drift
            Y = Y / grown
            log_scale += math.log(grown)
            if grown < 1e10:
                chunk = 2.0 * (c1 - c0) if c1 != b else chunk
            c0 = c1
        for j in range(2):
            log_incs[j].append(acc[j])


def weyl_classify(N, h, V, ends: Sequence[tuple[str, float]] = (("-", -math.inf), ("+", math.inf)),
                  anchor: float = 0.0, R_sequence: dict | None = None, step: float = 0.05,
                  windows: int = 8, width: float = 1.0, t: float = 0.0, rtol: float = 1e-10,
                  budget: int = 200_000) -> WeylVerdict:
    """Limit-point / limit-circle classification at each requested end.

    ``ends`` lists ``(side, location)`` pairs.  ``R_sequence`` may map a side
    to explicit window cutoffs; otherwise cutoffs grow geometrically by 1.5
    from ``width`` (infinite ends) or approach the finite location.  ``step``
    caps the ODE step.  An end is limit-circle when both solutions are
    square-integrable, limit-point when either is not, and inconclusive
    otherwise (including when the evaluation budget runs out).
    """
    P, m, q = _coefficients(N, h, V, t)
    out = []
    for side, location in ends:
        if R_sequence and side in R_sequence:
            cut = [float(c) for c in R_sequence[side]]
        else:
            cut = _cutoffs(anchor, float(location), side, windows, width)
        notes = []
        try:
            log_incs, drift, calls = _integrate_end(P, m, q, anchor, cut, side, step, rtol, budget)
        except _Budget as exc:
            log_incs, drift = exc.log_incs, exc.drift
            done = len(log_incs[0])
            notes.append(f"evaluation budget of {budget} exhausted after {done} of {len(cut)} "
                         "windows; classified on the completed windows")
            cut = cut[:done]
        except (OverflowError, ZeroDivisionError, ValueError) as exc:
            out.append(WeylEnd(side, "inconclusive", [], [], [], cut, math.nan,
                               [f"coefficients not evaluable: {exc}"]))
            continue
        classes, ratios = zip(*(_tail_class(li) for li in log_incs))
        if "not-square-integrable" in classes:
            kind = "limit-point"
        elif all(c == "square-integrable" for c in classes):
            kind = "limit-circle"
        else:
            kind = "inconclusive"
        out.append(WeylEnd(side, kind, list(classes), [[float(v) for v in li] for li in log_incs],
                           [list(r) for r in ratios], cut, float(drift), notes))
    return WeylVerdict(out, float(anchor))


def weyl_classify_scenario(scenario, t: float | None = None, step: float = 0.05,
                           **kwargs) -> WeylVerdict:
    """Probe a 1D closed-form scenario at its grid's ends, anchored mid-grid."""
    grid: Grid = scenario.grid
    if grid.dimension != 1:
        raise ProbeError("the Weyl probe is one-dimensional")
    ax = grid.axes[0]
    if ax.periodic:
        # compact slice without boundary: nothing to classify, w^2 is e.s.a.
        return WeylVerdict([], 0.5 * (ax.lo + ax.hi))
    anchor = 0.5 * (ax.lo + ax.hi)
    ends = [("-", ax.ends[0].location), ("+", ax.ends[1].location)]
    width = kwargs.pop("width", 0.125 * (ax.hi - ax.lo))
    return weyl_classify(scenario.lapse, scenario.metric, scenario.potential, ends, anchor,
                         step=step, width=width, t=scenario.t0 if t is None else t, **kwargs)
