"""Scenario descriptions: built-in catalog and TOML configuration files.

A scenario file looks like::

    name = "exp-lapse"
    [grid]
    axes = [{n = 161, lo = 0.0, hi = 8.0, ends = ["truncated", "open"]}]
    [lapse]
    expr = "exp(x)"
    [metric]
    expr = "1"            # or h11 / h12 / h22
    [potential]
    expr = "1"
    [time]
    t0 = 0.0
    t1 = 0.0
    samples = 1
    [flags]
    globally_hyperbolic = false
    static = true
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .expressions import Expr, ExpressionError, parse
from .manifold import FieldError, Foliation, Grid, GridError, MetricExpr, build_grid

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

__all__ = ["Scenario", "ScenarioError", "CATALOG", "catalog_names", "load_catalog",
           "parse_scenario", "scenario_from_dict", "resolve_scenario"]

TWO_PI = 2.0 * math.pi


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Scenario:
    name: str
    grid: Grid
    lapse: Expr
    metric: MetricExpr
    potential: Expr
    t0: float = 0.0
    t1: float = 0.0
    samples: int = 1
    globally_hyperbolic: bool = True
    static: bool = False
    conformally_static: bool = False
    description: str = ""
    _foliation: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        if self.static and (self.lapse.is_time_dependent or self.metric.is_time_dependent):
            raise ScenarioError(f"{self.name}: flagged static but lapse or metric depends on t")
        if self.samples < 1 or (self.samples > 1 and self.t1 <= self.t0):
            raise ScenarioError(f"{self.name}: time range needs t1 > t0 when samples > 1")
        if self.metric.dimension != self.grid.dimension:
            raise ScenarioError(f"{self.name}: metric is {self.metric.dimension}D, grid is "
                                f"{self.grid.dimension}D")

    @property
    def dimension(self) -> int:
        return self.grid.dimension

    @property
    def times(self) -> np.ndarray:
        if self.samples == 1:
            return np.array([self.t0])
        return np.linspace(self.t0, self.t1, self.samples)

    @property
    def foliation(self) -> Foliation:
        if not self._foliation:
            try:
                self._foliation.append(
                    Foliation(self.grid, self.times, self.lapse, self.metric, self.potential))
            except FieldError as exc:
                raise ScenarioError(f"{self.name}: {exc}") from None
        return self._foliation[0]

    def with_n(self, n: int) -> "Scenario":
        return replace(self, grid=self.grid.with_n(n), _foliation=[])

    def refined(self, factor: int = 2) -> "Scenario":
        return replace(self, grid=self.grid.refined(factor), _foliation=[])

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "description": self.description,
            "grid": self.grid.to_dict(),
            "lapse": self.lapse.source,
            "metric": self.metric.to_dict()["components"],
            "potential": self.potential.source,
            "time": {"t0": self.t0, "t1": self.t1, "samples": self.samples},
            "flags": {"globally_hyperbolic": self.globally_hyperbolic, "static": self.static,
                      "conformally_static": self.conformally_static},
        }


# ---------------------------------------------------------------------------
# parsing

_SECTIONS = {"name", "description", "grid", "lapse", "metric", "potential", "time", "flags"}


def _metric_from(section: dict, dim: int) -> MetricExpr:
    if "expr" in section:
        extra = set(section) - {"expr"}
        if extra:
            raise ScenarioError(f"metric: give either expr or components, not both ({sorted(extra)})")
        return MetricExpr.conformal(parse(str(section["expr"]), dim, "metric.expr"), dim)
    if dim == 1:
        if "h11" not in section:
            raise ScenarioError("metric: missing expr/h11")
        return MetricExpr([[parse(str(section["h11"]), 1, "metric.h11")]])
    try:
        h11 = parse(str(section["h11"]), 2, "metric.h11")
        h22 = parse(str(section["h22"]), 2, "metric.h22")
    except KeyError as exc:
        raise ScenarioError(f"metric: missing {exc.args[0]}") from None
    h12 = parse(str(section.get("h12", "0")), 2, "metric.h12")
    return MetricExpr([[h11, h12], [h12, h22]])


def scenario_from_dict(data: dict, default_name: str = "scenario") -> Scenario:
    unknown = set(data) - _SECTIONS
    if unknown:
        raise ScenarioError(f"unknown top-level keys: {sorted(unknown)}")
    try:
        grid = build_grid(data["grid"])
    except KeyError:
        raise ScenarioError("missing [grid] section") from None
    except (GridError, TypeError, ValueError) as exc:
        raise ScenarioError(f"grid: {exc}") from None
    dim = grid.dimension
    try:
        lapse = parse(str(data.get("lapse", {}).get("expr", "1")), dim, "lapse.expr")
        metric = _metric_from(data.get("metric", {"expr": "1"}), dim)
        potential = parse(str(data.get("potential", {}).get("expr", "0")), dim, "potential.expr")
    except (ExpressionError, FieldError) as exc:
        raise ScenarioError(str(exc)) from None
    time = data.get("time", {})
    flags = data.get("flags", {})
    bad_flags = set(flags) - {"globally_hyperbolic", "static", "conformally_static"}
    if bad_flags:
        raise ScenarioError(f"flags: unknown keys {sorted(bad_flags)}")
    sc = Scenario(
        name=str(data.get("name", default_name)),
        grid=grid, lapse=lapse, metric=metric, potential=potential,
        t0=float(time.get("t0", 0.0)), t1=float(time.get("t1", time.get("t0", 0.0))),
        samples=int(time.get("samples", 1)),
        globally_hyperbolic=bool(flags.get("globally_hyperbolic", True)),
        static=bool(flags.get("static", False)),
        conformally_static=bool(flags.get("conformally_static", False)),
        description=str(data.get("description", "")),
    )
    fol = sc.foliation  # positivity of N and SPD of h, with node locations on failure
    for t in sc.times:
        V = fol.potential_at(t)
        bad = ~np.isfinite(V.values)
        if bad.any():
            k = int(np.flatnonzero(bad)[0])
            where = tuple(float(c[k]) for c in grid.points())
            raise ScenarioError(f"potential: not finite at node {k} {where}, t = {t:g}; "
                                "place singular points between grid nodes")
    return sc


def parse_scenario(path) -> Scenario:
    """Read a TOML scenario file; errors carry line information or the field name."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario {path}: {exc.strerror}") from None
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ScenarioError(f"{path}: {exc}") from None
    return scenario_from_dict(data, default_name=path.stem)


# ---------------------------------------------------------------------------
# catalog

def _axis(n, lo, hi, boundary=None, ends=None, locations=None):
    d = {"n": n, "lo": lo, "hi": hi}
    if boundary:
        d["boundary"] = boundary
    if ends:
        d["ends"] = ends
    if locations:
        d["locations"] = locations
    return d


CATALOG: dict[str, dict] = {
    "minkowski-1d": {
        "description": "Flat slice, unit lapse, constant mass term on a circle.",
        "grid": {"axes": [_axis(256, 0.0, TWO_PI, "periodic")]},
        "lapse": {"expr": "1"}, "metric": {"expr": "1"}, "potential": {"expr": "1"},
        "flags": {"globally_hyperbolic": True, "static": True},
    },
    "minkowski-2d-torus": {
        "description": "Flat 2-torus slice with unit lapse and mass term.",
        "grid": {"axes": [_axis(32, 0.0, TWO_PI, "periodic"), _axis(32, 0.0, TWO_PI, "periodic")]},
        "lapse": {"expr": "1"}, "metric": {"expr": "1"}, "potential": {"expr": "1"},
        "flags": {"globally_hyperbolic": True, "static": True},
    },
    "static-cosh-lapse": {
        "description": "Unbounded lapse cosh(x) with h = cosh(x)^2 dx^2, so N^-2 h = dx^2 is complete.",
        "grid": {"axes": [_axis(201, -5.0, 5.0, "truncated")]},
        "lapse": {"expr": "cosh(x)"}, "metric": {"expr": "cosh(x)^2"}, "potential": {"expr": "1"},
        "flags": {"globally_hyperbolic": True, "static": True},
    },
    "kay-exp-lapse": {
        "description": "Lapse exp(x) on the flat line: N^-2 h = exp(-2x) dx^2 has finite length towards +inf.",
        "grid": {"axes": [_axis(161, 0.0, 8.0, ends=["truncated", "open"])]},
        "lapse": {"expr": "exp(x)"}, "metric": {"expr": "1"}, "potential": {"expr": "1"},
        "flags": {"globally_hyperbolic": False, "static": True},
    },
    "kay-interval-completion": {
        "description": "Incomplete slice (0,1) completed by the lapse x(1-x).",
        "grid": {"axes": [_axis(197, 0.01, 0.99, ends=["open", "open"], locations=[0.0, 1.0])]},
        "lapse": {"expr": "x*(1-x)"}, "metric": {"expr": "1"}, "potential": {"expr": "1"},
        "flags": {"globally_hyperbolic": True, "static": True},
    },
    "frw-1d": {
        "description": "Spatially flat FRW-like slice h = a(t)^2 dx^2, a = 1 + 0.1 sin t.",
        "grid": {"axes": [_axis(64, 0.0, TWO_PI, "periodic")]},
        "lapse": {"expr": "1"}, "metric": {"expr": "(1 + 0.1*sin(t))^2"}, "potential": {"expr": "1"},
        "time": {"t0": 0.0, "t1": 1.0, "samples": 11},
        "flags": {"globally_hyperbolic": True},
    },
    "conformally-static": {
        "description": "g = -N1^2 N2^2 dt^2 + N1^2 dx^2 with N1 = 1 + 0.1 sin(t) cos(x), N2 = sqrt(1+x^2).",
        "grid": {"axes": [_axis(121, -6.0, 6.0, "truncated")]},
        "lapse": {"expr": "(1 + 0.1*sin(t)*cos(x))*sqrt(1 + x^2)"},
        "metric": {"expr": "(1 + 0.1*sin(t)*cos(x))^2"},
        "potential": {"expr": "1"},
        "time": {"t0": 0.0, "t1": 1.0, "samples": 11},
        "flags": {"globally_hyperbolic": True, "conformally_static": True},
    },
    "ultrastatic": {
        "description": "Ultra-static 2-torus with unit lapse and a non-diagonal metric.",
        "grid": {"axes": [_axis(24, 0.0, TWO_PI, "periodic"), _axis(24, 0.0, TWO_PI, "periodic")]},
        "lapse": {"expr": "1"},
        "metric": {"h11": "2 + sin(x)", "h12": "0.3*cos(y)", "h22": "2 + cos(x)"},
        "potential": {"expr": "1"},
        "flags": {"globally_hyperbolic": True, "static": True},
    },
    "harmonic-probe": {
        "description": "Flat line with potential x^2 (harmonic oscillator).",
        "grid": {"axes": [_axis(161, -8.0, 8.0, "truncated")]},
        "lapse": {"expr": "1"}, "metric": {"expr": "1"}, "potential": {"expr": "x^2"},
        "flags": {"globally_hyperbolic": True, "static": True},
    },
    "quartic-negative": {
        "description": "Flat line with potential -x^4, not essentially self-adjoint.",
        "grid": {"axes": [_axis(121, -3.0, 3.0, "truncated")]},
        "lapse": {"expr": "1"}, "metric": {"expr": "1"}, "potential": {"expr": "-x^4"},
        "flags": {"globally_hyperbolic": True, "static": True},
    },
}


def catalog_names() -> list[str]:
    return list(CATALOG)


def load_catalog(name: str, grid_n: int | None = None) -> Scenario:
    if name not in CATALOG:
        raise ScenarioError(f"unknown catalog scenario {name!r}; choose from {catalog_names()}")
    sc = scenario_from_dict({"name": name, **CATALOG[name]})
    return sc.with_n(grid_n) if grid_n else sc


def resolve_scenario(ref: str, grid_n: int | None = None) -> Scenario:
    """A catalog name or a path to a TOML file."""
    if ref in CATALOG:
        return load_catalog(ref, grid_n)
    sc = parse_scenario(ref)
    return sc.with_n(grid_n) if grid_n else sc
