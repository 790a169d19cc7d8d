"""Weighted Laplacians under ``h -> a h``, ``mu -> b mu``.

With ``K = m h^-1`` the flux coefficient of ``(Sigma, h, mu)``, the rescaled
manifold has coefficient ``(b/a) K`` and density ``b m``.  Both routes below
feed identical coefficient products to the same stencil, so the identities
hold to rounding error.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sps

from .manifold import FieldError, Grid, MetricField, ScalarField, WeightedManifold, tilde_manifold
from .operators import (SymmetricSparseOperator, assemble_from_coefficients,
                        assemble_weighted_laplacian)

__all__ = ["ConformalPair", "conformal_transform", "divergence_form_laplacian",
           "lapse_rescaling_identity_check", "max_relative_difference"]


def _field(v, grid: Grid) -> ScalarField:
    if isinstance(v, ScalarField):
        return v
    return ScalarField(grid, np.broadcast_to(np.asarray(v, float), (grid.size,)))


@dataclass(frozen=True, eq=False)
class ConformalPair:
    """Metric factor ``a`` and measure factor ``b``, both positive."""

    a: ScalarField
    b: ScalarField

    def __post_init__(self):
        self.a.require_positive("conformal factor a")
        self.b.require_positive("measure factor b")
        if self.a.grid != self.b.grid:
            raise FieldError("a and b must share a grid")

    @classmethod
    def of(cls, a, b, grid: Grid) -> "ConformalPair":
        return cls(_field(a, grid), _field(b, grid))

    def compose(self, other: "ConformalPair") -> "ConformalPair":
        g = self.a.grid
        return ConformalPair(ScalarField(g, self.a.values * other.a.values),
                             ScalarField(g, self.b.values * other.b.values))


def conformal_transform(wm: WeightedManifold, cp: ConformalPair) -> WeightedManifold:
    """``(Sigma, a h, b mu)``."""
    if cp.a.grid != wm.grid:
        raise FieldError("conformal pair lives on a different grid")
    return WeightedManifold(wm.grid, wm.metric.scaled(cp.a),
                            ScalarField(wm.grid, cp.b.values * wm.weight.values))


def divergence_form_laplacian(wm: WeightedManifold, cp: ConformalPair) -> SymmetricSparseOperator:
    """``(1/b) div_mu((b/a) grad .)`` built from the untransformed manifold.

    ``div_mu v = (1/m) d_i(m v^i)`` with the full coordinate density ``m``.
    """
    if cp.a.grid != wm.grid:
        raise FieldError("conformal pair lives on a different grid")
    m = wm.weight.values
    a, b = cp.a.values, cp.b.values
    K = ((b / a) * m)[:, None, None] * wm.metric.inverse
    return assemble_from_coefficients(wm.grid, K, b * m)


def max_relative_difference(A, B) -> float:
    """``max|A - B| / max|A|`` over all entries (sparse or dense)."""
    A = A.matrix if isinstance(A, SymmetricSparseOperator) else A
    B = B.matrix if isinstance(B, SymmetricSparseOperator) else B
    A, B = sps.csr_matrix(A), sps.csr_matrix(B)
    scale = abs(A).max()
    diff = abs(A - B).max()
    return float(diff / scale) if scale > 0 else float(diff)


def lapse_rescaling_identity_check(N: ScalarField, h: MetricField, grid: Grid | None = None) -> float:
    """Relative entry-wise gap between ``Delta~_mu~`` and ``N^2 Delta_mu``.

    ``Delta~_mu~`` lives on ``(N^-2 h, N^-1 sqrt|h|)``; ``Delta_mu`` on
    ``(h, N sqrt|h|)``.
    """
    grid = grid or N.grid
    N.require_positive("lapse N")
    tilde = assemble_weighted_laplacian(tilde_manifold(N, h, grid))
    wm = WeightedManifold(grid, h, ScalarField(grid, N.values * h.sqrt_det))
    scaled = sps.diags(N.values ** 2) @ assemble_weighted_laplacian(wm).matrix
    return max_relative_difference(tilde.matrix, scaled)
