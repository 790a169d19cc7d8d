"""Klein-Gordon evolution in foliated form and the symplectic form on slices.

With ``chi = d_t phi`` the field equation is::

    d_t phi = chi,   d_t chi = -f chi - w^2(t) phi,
    f = -N^-1 d_t N + |h|^-1/2 d_t |h|^1/2

integrated with classical RK4.  The momentum on a slice is ``pi = N^-1 chi``.

Because ``w^2(t)`` is symmetric for the weights ``N^-1 |h|^1/2`` and ``f`` is
exactly the log-derivative of those weights, the semi-discrete system
conserves ``Omega`` identically; any drift observed is time-integration
error and shrinks at the integrator's order.
"""

from __future__ import annotations

import csv
import math
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import IO, Callable, Sequence

import numpy as np

from .manifold import FieldError, Foliation, Grid, MetricField, ScalarField
from .operators import SymmetricSparseOperator, assemble_w2
from .spectral import lambda_max_estimate

__all__ = ["CauchyData", "Trajectory", "StabilityError", "friction_coefficient", "evolve_kg",
           "symplectic_form", "conservation_check", "ConservationResult", "discrete_energy",
           "stability_limit", "SAFETY"]

SAFETY = 0.5


class StabilityError(ValueError):
    pass


def _values(u, grid: Grid) -> np.ndarray:
    if isinstance(u, ScalarField):
        if u.grid != grid:
            raise FieldError("field lives on a different grid")
        return np.asarray(u.values, dtype=float)
    a = np.asarray(u, dtype=float).ravel()
    if a.size != grid.size:
        raise FieldError(f"expected {grid.size} node values, got {a.size}")
    return a


@dataclass(frozen=True, eq=False)
class CauchyData:
    """Field and momentum ``pi = N^-1 d_t phi`` on one slice."""

    phi: ScalarField
    pi: ScalarField
    support: np.ndarray | None = None

    def __post_init__(self):
        if self.phi.grid != self.pi.grid:
            raise FieldError("phi and pi must share a grid")
        if self.support is not None:
            mask = np.asarray(self.support, dtype=bool).ravel()
            if mask.size != self.phi.grid.size:
                raise FieldError("support mask has the wrong size")
            if np.any(self.phi.values[~mask] != 0) or np.any(self.pi.values[~mask] != 0):
                raise FieldError("Cauchy data do not vanish outside the support mask")
            mask.setflags(write=False)
            object.__setattr__(self, "support", mask)

    @classmethod
    def from_arrays(cls, grid: Grid, phi, pi, support=None) -> "CauchyData":
        return cls(ScalarField(grid, _values(phi, grid)), ScalarField(grid, _values(pi, grid)), support)

    @classmethod
    def zero(cls, grid: Grid) -> "CauchyData":
        z = np.zeros(grid.size)
        return cls(ScalarField(grid, z), ScalarField(grid, z))

    @property
    def grid(self) -> Grid:
        return self.phi.grid


def friction_coefficient(fol: Foliation, t: float) -> ScalarField:
    """``f = -N^-1 d_t N + |h|^-1/2 d_t |h|^1/2`` at the nodes."""
    dN, dsd = fol.time_derivatives(t)
    N = fol.lapse_at(t).values
    sd = fol.metric_at(t).sqrt_det
    return ScalarField(fol.grid, -dN / N + dsd / sd)


@dataclass
class Trajectory:
    times: np.ndarray
    states: list[CauchyData]
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if self.times.size != len(self.states):
            raise ValueError("one state per time sample is required")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("trajectory times must be strictly increasing")

    @property
    def final(self) -> CauchyData:
        return self.states[-1]

    def to_csv(self, stream: IO[str], quantity: str = "phi") -> None:
        """One row per stored time: ``t`` followed by the node values."""
        if quantity not in ("phi", "pi"):
            raise ValueError("quantity must be 'phi' or 'pi'")
        w = csv.writer(stream, lineterminator="\n")
        n = self.states[0].grid.size
        w.writerow(["t"] + [f"node_{i}" for i in range(n)])
        for t, s in zip(self.times, self.states):
            vals = getattr(s, quantity).values
            w.writerow([repr(float(t))] + [repr(float(v)) for v in vals])


class _Slices:
    """Memoised ``(w^2, f, N)`` per time; small LRU since RK4 reuses step ends."""

    def __init__(self, fol: Foliation, size: int = 6):
        self.fol = fol
        self.static = fol.is_static
        self.size = size
        self.cache: OrderedDict = OrderedDict()
        self.assembled = 0

    def __call__(self, t: float):
        key = 0.0 if self.static else float(t)
        hit = self.cache.get(key)
        if hit is not None:
            self.cache.move_to_end(key)
            return hit
        fol = self.fol
        N = fol.lapse_at(key if self.static else t)
        op = assemble_w2(N, fol.metric_at(t), fol.potential_at(t), fol.grid)
        f = np.zeros(fol.grid.size) if self.static else friction_coefficient(fol, t).values
        entry = (op.matrix, f, N.values, op)
        self.assembled += 1
        self.cache[key] = entry
        if len(self.cache) > self.size:
            self.cache.popitem(last=False)
        return entry


def stability_limit(fol: Foliation, t0: float, t1: float, seed: int = 0) -> float:
    """``SAFETY / sqrt(lambda_max)`` with ``lambda_max`` from power iteration at the ends and middle."""
    ts = {float(t0), float(t1), 0.5 * (t0 + t1)} if not fol.is_static else {float(t0)}
    lam = 0.0
    for t in ts:
        op = assemble_w2(fol.lapse_at(t), fol.metric_at(t), fol.potential_at(t), fol.grid)
        lam = max(lam, lambda_max_estimate(op, seed=seed))
    # power iteration approaches lambda_max from below; pad by 5 %
    return SAFETY / math.sqrt(1.05 * lam) if lam > 0 else math.inf


def _rk4(phi, chi, slices: _Slices, t0: float, dt: float, steps: int, every: int,
         callback: Callable | None = None):
    times, phis, chis = [t0], [phi.copy()], [chi.copy()]

    def rhs(t, p, c):
        A, f, _, _ = slices(t)
        fc = f[:, None] * c if c.ndim == 2 else f * c
        return c, -fc - A @ p

    t = t0
    for k in range(1, steps + 1):
        k1p, k1c = rhs(t, phi, chi)
        k2p, k2c = rhs(t + 0.5 * dt, phi + 0.5 * dt * k1p, chi + 0.5 * dt * k1c)
        k3p, k3c = rhs(t + 0.5 * dt, phi + 0.5 * dt * k2p, chi + 0.5 * dt * k2c)
        k4p, k4c = rhs(t + dt, phi + dt * k3p, chi + dt * k3c)
        phi = phi + dt / 6.0 * (k1p + 2 * k2p + 2 * k3p + k4p)
        chi = chi + dt / 6.0 * (k1c + 2 * k2c + 2 * k3c + k4c)
        t = t0 + k * dt
        if k % every == 0 or k == steps:
            times.append(t)
            phis.append(phi.copy())
            chis.append(chi.copy())
        if callback is not None:
            callback(t, phi, chi)
    return np.array(times), phis, chis


def _steps(t0: float, t1: float, dt: float) -> tuple[int, float]:
    if not t1 > t0:
        raise ValueError("evolution needs t1 > t0")
    if not dt > 0:
        raise ValueError("dt must be positive")
    steps = max(1, int(math.ceil((t1 - t0) / dt - 1e-9)))
    return steps, (t1 - t0) / steps


def evolve_kg(data: CauchyData, fol: Foliation, t0: float, t1: float, dt: float,
              store_every: int = 1, check_stability: bool = True,
              limit: float | None = None) -> Trajectory:
    """RK4 integration of the Klein-Gordon equation from ``t0`` to ``t1``.

    ``dt`` is shrunk to divide ``t1 - t0`` evenly.  Raises
    :class:`StabilityError` before stepping if ``dt`` exceeds
    ``0.5 / sqrt(lambda_max)``.
    """
    if data.grid != fol.grid:
        raise FieldError("Cauchy data and foliation live on different grids")
    steps, dt = _steps(t0, t1, dt)
    if check_stability:
        limit = stability_limit(fol, t0, t1) if limit is None else limit
        if dt > limit:
            raise StabilityError(f"dt={dt:.4g} exceeds the stability bound {limit:.4g}")
    slices = _Slices(fol)
    N0 = fol.lapse_at(t0).values
    times, phis, chis = _rk4(data.phi.values.copy(), N0 * data.pi.values, slices, t0, dt, steps,
                             max(1, int(store_every)))
    states = []
    for t, p, c in zip(times, phis, chis):
        N = slices(t)[2]
        states.append(CauchyData(ScalarField(fol.grid, p), ScalarField(fol.grid, c / N)))
    diag = {"dt": dt, "steps": steps, "stability_limit": limit, "assembled_slices": slices.assembled}
    return Trajectory(times, states, diag)


def symplectic_form(d1: CauchyData, d2: CauchyData, h: MetricField, grid: Grid | None = None) -> float:
    """``sum (pi1 phi2 - pi2 phi1) sqrt|h| dV`` over the nodes."""
    grid = grid or d1.grid
    if d1.grid != grid or d2.grid != grid or h.grid != grid:
        raise FieldError("symplectic form needs both data sets and h on one grid")
    w = h.sqrt_det * grid.cell_volume
    return float(np.sum((d1.pi.values * d2.phi.values - d2.pi.values * d1.phi.values) * w))


def _omega(pi1, phi1, pi2, phi2, w):
    return float(np.sum((pi1 * phi2 - pi2 * phi1) * w))


def discrete_energy(phi, chi, op: SymmetricSparseOperator) -> float:
    """``<chi, chi> + <phi, w^2 phi>`` in the weights of ``op``."""
    w = op.weights
    return float(np.sum(w * chi * chi) + np.sum(w * phi * (op.matrix @ phi)))


@dataclass
class ConservationResult:
    drift: float
    relative: bool
    omega0: float
    times: np.ndarray = field(repr=False)
    omegas: np.ndarray = field(repr=False)
    dt: float = 0.0

    def to_dict(self) -> dict:
        return {"drift": self.drift, "relative": self.relative, "omega0": self.omega0, "dt": self.dt,
                "samples": int(self.times.size)}


def conservation_check(d1: CauchyData, d2: CauchyData, fol: Foliation, t0: float, t1: float,
                       dt: float, check_stability: bool = True) -> ConservationResult:
    """Largest change of ``Omega`` between two evolved data sets over ``[t0, t1]``.

    Both data sets are evolved together; ``Omega`` is evaluated every step
    with ``h`` and ``N`` of the current slice.  The drift is relative to
    ``|Omega(t0)|`` unless that is below 1e-12, then absolute.
    """
    grid = fol.grid
    if d1.grid != grid or d2.grid != grid:
        raise FieldError("Cauchy data and foliation live on different grids")
    steps, dt = _steps(t0, t1, dt)
    if check_stability:
        limit = stability_limit(fol, t0, t1)
        if dt > limit:
            raise StabilityError(f"dt={dt:.4g} exceeds the stability bound {limit:.4g}")
    slices = _Slices(fol)
    N0 = fol.lapse_at(t0).values
    phi = np.column_stack([d1.phi.values, d2.phi.values])
    chi = np.column_stack([N0 * d1.pi.values, N0 * d2.pi.values])
    ts, om = [], []

    def record(t, p, c):
        N = fol.lapse_at(t).values if not slices.static else N0
        w = fol.metric_at(t).sqrt_det * grid.cell_volume
        pi = c / N[:, None]
        ts.append(t)
        om.append(_omega(pi[:, 0], p[:, 0], pi[:, 1], p[:, 1], w))

    record(t0, phi, chi)
    _rk4(phi, chi, slices, t0, dt, steps, steps, callback=record)
    om = np.array(om)
    omega0 = om[0]
    dev = float(np.max(np.abs(om - omega0)))
    relative = abs(omega0) >= 1e-12
    drift = dev / abs(omega0) if relative else dev
    return ConservationResult(drift, relative, float(omega0), np.array(ts), om, dt)
