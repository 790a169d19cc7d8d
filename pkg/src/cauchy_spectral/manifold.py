"""Discretised spatial manifolds, fields on them, and weighted measures.

All node-valued arrays are stored flattened in C order over ``grid.shape``,
with axis 0 the ``x`` direction.  A :class:`WeightedManifold` stores the full
coordinate density ``m = d(mu)/d^d x`` of its measure, which already contains
the ``sqrt|h|`` factor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import sympy as sp

from .expressions import Expr, Singularity, T, X, Y

__all__ = [
    "End", "Axis", "Grid", "ScalarField", "MetricExpr", "MetricField",
    "WeightedManifold", "Foliation", "GridError", "FieldError",
    "build_grid", "weighted_inner_product", "tilde_manifold", "SPD_TOL",
]

SPD_TOL = 1e-12
END_KINDS = ("truncated", "open")


class GridError(ValueError):
    pass


class FieldError(ValueError):
    pass


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class End:
    """One end of a non-periodic axis.

    ``kind`` is ``"truncated"`` (data are zero-padded past the grid edge) or
    ``"open"`` (the grid edge approaches an end of a non-compact or
    incomplete manifold).  ``location`` is the coordinate at which the
    manifold itself ends, possibly infinite; completeness checks integrate
    the closed-form metric from the grid out to it.
    """

    kind: str
    location: float

    def __post_init__(self):
        if self.kind not in END_KINDS:
            raise GridError(f"end kind must be one of {END_KINDS}, got {self.kind!r}")


@dataclass(frozen=True)
class Axis:
    n: int
    lo: float
    hi: float
    periodic: bool
    ends: tuple[End, End] | None = None

    def __post_init__(self):
        if self.n < 4:
            raise GridError(f"need at least 4 nodes per axis, got {self.n}")
        if not (np.isfinite(self.lo) and np.isfinite(self.hi)) or self.hi <= self.lo:
            raise GridError(f"axis extent must be finite and positive, got [{self.lo}, {self.hi}]")
        if self.periodic and self.ends is not None:
            raise GridError("periodic axes have no ends")
        if not self.periodic:
            if self.ends is None or len(self.ends) != 2:
                raise GridError("a non-periodic axis needs exactly two end descriptors")
            if self.ends[0].location > self.lo or self.ends[1].location < self.hi:
                raise GridError("end locations must lie outside the grid window")

    @property
    def spacing(self) -> float:
        if self.periodic:
            return (self.hi - self.lo) / self.n
        return (self.hi - self.lo) / (self.n - 1)

    @property
    def coordinates(self) -> np.ndarray:
        return self.lo + self.spacing * np.arange(self.n)

    def refined(self, n: int) -> "Axis":
        return Axis(n, self.lo, self.hi, self.periodic, self.ends)


@dataclass(frozen=True)
class Grid:
    axes: tuple[Axis, ...]

    def __post_init__(self):
        if len(self.axes) not in (1, 2):
            raise GridError(f"dimension must be 1 or 2, got {len(self.axes)}")

    @property
    def dimension(self) -> int:
        return len(self.axes)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(a.n for a in self.axes)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def spacings(self) -> tuple[float, ...]:
        return tuple(a.spacing for a in self.axes)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacings))

    def mesh(self) -> list[np.ndarray]:
        """Coordinate arrays of shape ``self.shape`` (``ij`` indexing)."""
        return np.meshgrid(*(a.coordinates for a in self.axes), indexing="ij")

    def points(self) -> list[np.ndarray]:
        """Flattened coordinate arrays, one per axis."""
        return [c.ravel() for c in self.mesh()]

    def refined(self, factor: int = 2) -> "Grid":
        """Grid with ``factor`` times the spacing resolution on every axis."""
        axes = []
        for a in self.axes:
            n = a.n * factor if a.periodic else (a.n - 1) * factor + 1
            axes.append(a.refined(n))
        return Grid(tuple(axes))

    def with_n(self, n: int) -> "Grid":
        return Grid(tuple(a.refined(n) for a in self.axes))

    def to_dict(self) -> dict:
        out = []
        for a in self.axes:
            d = {"n": a.n, "lo": a.lo, "hi": a.hi}
            if a.periodic:
                d["boundary"] = "periodic"
            else:
                d["ends"] = [e.kind for e in a.ends]
                d["locations"] = [e.location for e in a.ends]
            out.append(d)
        return {"axes": out}


def build_grid(spec: Sequence[dict] | dict) -> Grid:
    """Build a :class:`Grid` from axis descriptors.

    Each descriptor has ``n``, ``lo``, ``hi`` and either
    ``boundary="periodic"``, a single end kind for both ends
    (``boundary="truncated"`` / ``"open"``), or an ``ends`` pair.  Optional
    ``locations`` give where the manifold ends (default: the infinities).

    >>> build_grid([{"n": 5, "lo": 0.0, "hi": 1.0, "boundary": "truncated"}]).spacings
    (0.25,)
    """
    if isinstance(spec, dict):
        spec = spec.get("axes", [spec])
    axes = []
    for i, ax in enumerate(spec):
        try:
            n, lo, hi = int(ax["n"]), float(ax["lo"]), float(ax["hi"])
        except KeyError as exc:
            raise GridError(f"axis {i}: missing key {exc.args[0]!r}") from None
        boundary = ax.get("boundary")
        if boundary == "periodic":
            axes.append(Axis(n, lo, hi, True))
            continue
        kinds = ax.get("ends", [boundary or "truncated"] * 2)
        if isinstance(kinds, str):
            kinds = [kinds, kinds]
        locs = ax.get("locations", [-math.inf, math.inf])
        locs = [float(v) for v in locs]
        axes.append(Axis(n, lo, hi, False, (End(kinds[0], locs[0]), End(kinds[1], locs[1]))))
    return Grid(tuple(axes))


# ---------------------------------------------------------------------------
# fields

@dataclass(frozen=True, eq=False)
class ScalarField:
    grid: Grid
    values: np.ndarray
    expr: Expr | None = None

    def __post_init__(self):
        vals = _frozen(np.ravel(self.values))
        if vals.size != self.grid.size:
            raise FieldError(f"field has {vals.size} values for a grid of {self.grid.size} nodes")
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_expr(cls, expr, grid: Grid, t: float = 0.0) -> "ScalarField":
        expr = Expr.coerce(expr)
        return cls(grid, expr(*grid.points(), t=t), expr)

    @classmethod
    def constant(cls, grid: Grid, value: float) -> "ScalarField":
        return cls(grid, np.full(grid.size, float(value)), Expr.constant(value))

    @property
    def singularities(self) -> tuple[Singularity, ...]:
        return self.expr.singularities if self.expr is not None else ()

    def require_positive(self, name: str = "field") -> None:
        bad = ~(self.values > 0)
        if bad.any():
            k = int(np.flatnonzero(bad)[0])
            where = tuple(float(c[k]) for c in self.grid.points())
            raise FieldError(f"{name} must be positive; value {self.values[k]!r} at node {k} {where}")

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)


class MetricExpr:
    """Symmetric ``d x d`` matrix of closed forms."""

    def __init__(self, components):
        comps = [[Expr.coerce(c) for c in row] for row in components]
        d = len(comps)
        if any(len(row) != d for row in comps) or d not in (1, 2):
            raise FieldError("metric must be a square 1x1 or 2x2 matrix")
        if d == 2 and sp.simplify(comps[0][1].sym - comps[1][0].sym) != 0:
            raise FieldError("metric components h12 and h21 differ")
        self.components = comps
        self._sqrt_det = None

    @classmethod
    def conformal(cls, factor, dimension: int) -> "MetricExpr":
        f = Expr.coerce(factor)
        zero = Expr.constant(0.0)
        return cls([[f if i == j else zero for j in range(dimension)] for i in range(dimension)])

    @property
    def dimension(self) -> int:
        return len(self.components)

    def matrix(self) -> sp.Matrix:
        return sp.Matrix([[c.sym for c in row] for row in self.components])

    @property
    def is_time_dependent(self) -> bool:
        return any(c.is_time_dependent for row in self.components for c in row)

    def scaled(self, factor) -> "MetricExpr":
        f = Expr.coerce(factor)
        return MetricExpr([[f * c for c in row] for row in self.components])

    def sqrt_det(self) -> Expr:
        if self._sqrt_det is None:
            self._sqrt_det = Expr(sp.sqrt(self.matrix().det()))
        return self._sqrt_det

    def evaluate(self, grid: Grid, t: float = 0.0) -> "MetricField":
        d = self.dimension
        pts = grid.points()
        vals = np.empty((grid.size, d, d))
        for i in range(d):
            for j in range(d):
                vals[:, i, j] = self.components[i][j](*pts, t=t)
        return MetricField(grid, vals, self)

    def to_dict(self) -> dict:
        return {"components": [[c.source for c in row] for row in self.components]}


@dataclass(frozen=True, eq=False)
class MetricField:
    grid: Grid
    values: np.ndarray
    expr: MetricExpr | None = None

    def __post_init__(self):
        d = self.grid.dimension
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim == 1 and d == 1:
            vals = vals.reshape(-1, 1, 1)
        if vals.shape != (self.grid.size, d, d):
            raise FieldError(f"metric array shape {vals.shape} does not match ({self.grid.size}, {d}, {d})")
        if not np.allclose(vals, np.swapaxes(vals, 1, 2), rtol=0, atol=0):
            raise FieldError("metric must be symmetric at every node")
        eig = np.linalg.eigvalsh(vals)
        bad = ~(eig[:, 0] > SPD_TOL)
        if bad.any():
            k = int(np.flatnonzero(bad)[0])
            where = tuple(float(c[k]) for c in self.grid.points())
            raise FieldError(f"metric not positive definite at node {k} {where}: eigenvalues {eig[k]}")
        object.__setattr__(self, "values", _frozen(vals))

    @classmethod
    def identity(cls, grid: Grid) -> "MetricField":
        d = grid.dimension
        return cls(grid, np.broadcast_to(np.eye(d), (grid.size, d, d)).copy(),
                   MetricExpr.conformal(1.0, d))

    @classmethod
    def from_expr(cls, expr: MetricExpr, grid: Grid, t: float = 0.0) -> "MetricField":
        return expr.evaluate(grid, t)

    @property
    def det(self) -> np.ndarray:
        if self.grid.dimension == 1:
            return self.values[:, 0, 0].copy()
        v = self.values
        return v[:, 0, 0] * v[:, 1, 1] - v[:, 0, 1] * v[:, 1, 0]

    @property
    def sqrt_det(self) -> np.ndarray:
        return np.sqrt(self.det)

    @property
    def inverse(self) -> np.ndarray:
        if self.grid.dimension == 1:
            return 1.0 / self.values
        v = self.values
        det = self.det
        inv = np.empty_like(v)
        inv[:, 0, 0] = v[:, 1, 1] / det
        inv[:, 1, 1] = v[:, 0, 0] / det
        inv[:, 0, 1] = inv[:, 1, 0] = -v[:, 0, 1] / det
        return inv

    def scaled(self, factor) -> "MetricField":
        """Node-wise product ``factor * h``; closed form kept when available."""
        f = np.asarray(factor.values if isinstance(factor, ScalarField) else factor, dtype=float)
        f = np.broadcast_to(f, (self.grid.size,))
        expr = None
        fexpr = factor.expr if isinstance(factor, ScalarField) else (
            Expr.constant(float(factor)) if np.ndim(factor) == 0 else None)
        if self.expr is not None and fexpr is not None:
            expr = self.expr.scaled(fexpr)
        return MetricField(self.grid, self.values * f[:, None, None], expr)


@dataclass(frozen=True, eq=False)
class WeightedManifold:
    """A grid with a Riemannian metric and the coordinate density of a measure."""

    grid: Grid
    metric: MetricField
    weight: ScalarField

    def __post_init__(self):
        if self.metric.grid != self.grid or self.weight.grid != self.grid:
            raise GridError("metric and weight must live on the manifold's grid")
        self.weight.require_positive("measure weight")

    @classmethod
    def from_density(cls, metric: MetricField, rho=None) -> "WeightedManifold":
        """``m = rho * sqrt|h|``; ``rho`` defaults to 1 (Riemannian volume)."""
        grid = metric.grid
        if rho is None:
            rho = ScalarField.constant(grid, 1.0)
        elif not isinstance(rho, ScalarField):
            rho = ScalarField(grid, np.broadcast_to(np.asarray(rho, float), (grid.size,)))
        sd = metric.sqrt_det
        expr = None
        if rho.expr is not None and metric.expr is not None:
            expr = rho.expr * metric.expr.sqrt_det()
        return cls(grid, metric, ScalarField(grid, rho.values * sd, expr))

    @property
    def node_weights(self) -> np.ndarray:
        """Quadrature weights ``m * prod(dx)`` of the weighted inner product."""
        return self.weight.values * self.grid.cell_volume

    def scaled(self, metric_factor, measure_factor) -> "WeightedManifold":
        mf = np.broadcast_to(np.asarray(measure_factor, float), (self.grid.size,))
        return WeightedManifold(self.grid, self.metric.scaled(metric_factor),
                                ScalarField(self.grid, self.weight.values * mf))


def _values(u, grid: Grid) -> np.ndarray:
    if isinstance(u, ScalarField):
        if u.grid != grid:
            raise GridError("field lives on a different grid")
        return u.values
    u = np.asarray(u)
    if u.size != grid.size:
        raise GridError(f"array of {u.size} values does not match grid of {grid.size} nodes")
    return u.ravel()


def weighted_inner_product(u, v, wm: WeightedManifold) -> float:
    """Discrete ``L^2(Sigma, mu)`` product ``sum u v m prod(dx)``."""
    a, b = _values(u, wm.grid), _values(v, wm.grid)
    return float(np.sum(a * b * wm.node_weights))


def tilde_manifold(N: ScalarField, h: MetricField, grid: Grid | None = None) -> WeightedManifold:
    """Conformally rescaled slice ``(Sigma, N^-2 h, N^-1 sqrt|h| d^dx)``.

    The returned weight is ``N^-1 sqrt|h|`` in every dimension; it is not the
    Riemannian volume of ``N^-2 h`` unless ``d = 1``.
    """
    grid = grid or N.grid
    if N.grid != grid or h.grid != grid:
        raise GridError("lapse and metric must share the grid")
    N.require_positive("lapse N")
    inv2 = ScalarField(grid, N.values ** -2.0, N.expr ** -2 if N.expr is not None else None)
    metric = h.scaled(inv2)
    wexpr = None
    if N.expr is not None and h.expr is not None:
        wexpr = h.expr.sqrt_det() / N.expr
    weight = ScalarField(grid, h.sqrt_det / N.values, wexpr)
    return WeightedManifold(grid, metric, weight)


# ---------------------------------------------------------------------------
# foliations

@dataclass(frozen=True, eq=False)
class Foliation:
    """Lapse, spatial metric and potential on ``R x Sigma``.

    Fields are either closed forms in ``(x[, y], t)`` (evaluated at any
    ``t``) or lists of samples at ``times`` (linearly interpolated, time
    derivatives by centred differences of the samples).
    """

    grid: Grid
    times: np.ndarray
    lapse: Expr | Sequence[ScalarField]
    metric: MetricExpr | Sequence[MetricField]
    potential: Expr | ScalarField | Sequence[ScalarField] = 0.0
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        times = _frozen(np.ravel(self.times))
        if times.size < 1 or np.any(np.diff(times) <= 0):
            raise FieldError("foliation times must be strictly increasing")
        object.__setattr__(self, "times", times)
        if not isinstance(self.lapse, Expr):
            object.__setattr__(self, "lapse", tuple(self.lapse))
            if len(self.lapse) != times.size:
                raise FieldError("one lapse sample per time is required")
        if not isinstance(self.metric, MetricExpr):
            object.__setattr__(self, "metric", tuple(self.metric))
            if len(self.metric) != times.size:
                raise FieldError("one metric sample per time is required")
        pot = self.potential
        if isinstance(pot, (int, float, str)):
            object.__setattr__(self, "potential", Expr.coerce(pot))
        elif isinstance(pot, (list, tuple)):
            object.__setattr__(self, "potential", tuple(pot))
        for t in times:
            self.lapse_at(float(t)).require_positive(f"lapse N at t={t}")
            self.metric_at(float(t))

    # helpers ---------------------------------------------------------
    @property
    def closed_form(self) -> bool:
        return isinstance(self.lapse, Expr) and isinstance(self.metric, MetricExpr)

    @property
    def is_static(self) -> bool:
        if isinstance(self.lapse, Expr):
            lapse_static = not self.lapse.is_time_dependent
        else:
            lapse_static = all(np.array_equal(s.values, self.lapse[0].values) for s in self.lapse)
        if isinstance(self.metric, MetricExpr):
            metric_static = not self.metric.is_time_dependent
        else:
            metric_static = all(np.array_equal(m.values, self.metric[0].values) for m in self.metric)
        return lapse_static and metric_static

    def _check_time(self, t: float) -> None:
        lo, hi = self.times[0], self.times[-1]
        span = max(hi - lo, 1.0)
        if t < lo - 1e-12 * span or t > hi + 1e-12 * span:
            raise FieldError(f"t={t} outside the sampled range [{lo}, {hi}]")

    def _interp(self, samples, t: float, make):
        i = int(np.clip(np.searchsorted(self.times, t, side="right") - 1, 0, self.times.size - 1))
        if i == self.times.size - 1 or t == self.times[i]:
            return samples[i]
        t0, t1 = self.times[i], self.times[i + 1]
        w = (t - t0) / (t1 - t0)
        return make((1 - w) * samples[i].values + w * samples[i + 1].values)

    # evaluation ------------------------------------------------------
    def lapse_at(self, t: float) -> ScalarField:
        key = ("N", float(t))
        if key not in self._cache:
            if isinstance(self.lapse, Expr):
                self._cache[key] = ScalarField.from_expr(self.lapse, self.grid, t)
            else:
                self._check_time(t)
                self._cache[key] = self._interp(self.lapse, t, lambda v: ScalarField(self.grid, v))
        return self._cache[key]

    def metric_at(self, t: float) -> MetricField:
        key = ("h", float(t))
        if key not in self._cache:
            if isinstance(self.metric, MetricExpr):
                self._cache[key] = self.metric.evaluate(self.grid, t)
            else:
                self._check_time(t)
                self._cache[key] = self._interp(self.metric, t, lambda v: MetricField(self.grid, v))
        return self._cache[key]

    def potential_at(self, t: float) -> ScalarField:
        pot = self.potential
        if isinstance(pot, Expr):
            return ScalarField.from_expr(pot, self.grid, t)
        if isinstance(pot, ScalarField):
            return pot
        self._check_time(t)
        return self._interp(pot, t, lambda v: ScalarField(self.grid, v))

    def lapse_expr_at(self, t: float) -> Expr | None:
        return self.lapse.substitute_time(t) if isinstance(self.lapse, Expr) else None

    def time_derivatives(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        """``(d_t N, d_t sqrt|h|)`` node-wise at time ``t``."""
        self._check_time(t)
        if self.closed_form:
            if "d_dt" not in self._cache:
                self._cache["d_dt"] = (self.lapse.diff(T), self.metric.sqrt_det().diff(T))
            dN_expr, dsd_expr = self._cache["d_dt"]
            pts = self.grid.points()
            return dN_expr(*pts, t=t), dsd_expr(*pts, t=t)
        if self.times.size < 2:
            raise FieldError("time derivatives need at least two samples")
        N = np.array([self.lapse_at(float(s)).values for s in self.times])
        sd = np.array([self.metric_at(float(s)).sqrt_det for s in self.times])
        dN = np.gradient(N, self.times, axis=0)
        dsd = np.gradient(sd, self.times, axis=0)
        wrap = lambda v: ScalarField(self.grid, v)  # noqa: E731
        return (self._interp([wrap(r) for r in dN], t, lambda v: wrap(v)).values,
                self._interp([wrap(r) for r in dsd], t, lambda v: wrap(v)).values)
