"""Weighted Laplace-Beltrami and Klein-Gordon spatial operators.

The Laplacian of a weighted manifold with coordinate density ``m`` is
discretised in flux form,

    (Delta_mu u)_p = -(1/m_p) (S u)_p,   S = sum_a D_a^T C_a D_a + cross terms,

where ``D_a`` are one-sided face differences, ``C_a`` are face coefficients
(arithmetic means of ``m h^aa`` at the two adjacent nodes) and the cross
terms of a non-diagonal 2D metric couple cell-averaged gradients.  ``S`` is
symmetric, so ``Delta_mu`` is symmetric in the inner product with weights
``m * prod(dx)`` and the discrete Green formula is an exact identity.

Non-periodic edges use zero extension: the field vanishes on a ghost layer
one spacing beyond the grid, coefficients are clamped to the edge value.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import IO

import numpy as np
import scipy.sparse as sps
import sympy as sp

from .expressions import Expr, T, X, Y
from .manifold import (Axis, Grid, GridError, MetricExpr, MetricField, ScalarField,
                       WeightedManifold, tilde_manifold)

__all__ = [
    "SymmetricSparseOperator", "assemble_weighted_laplacian", "assemble_from_coefficients",
    "dirichlet_form", "verify_green_formula", "assemble_w2", "assemble_w2_expanded",
    "w2_continuum", "read_triplets",
]


@dataclass(frozen=True, eq=False)
class SymmetricSparseOperator:
    """A sparse operator together with the diagonal weights it is symmetric in.

    ``weights`` are the quadrature weights ``W`` of the inner product, so
    weighted symmetry means ``diag(W) A == A.T diag(W)``.  ``potential`` is
    the diagonal part added to ``-Delta`` for Klein-Gordon operators.
    """

    matrix: sps.csr_matrix
    weights: np.ndarray
    form: str = "divergence"
    potential: np.ndarray | None = None
    grid: Grid | None = None

    def __post_init__(self):
        A = sps.csr_matrix(self.matrix)
        A.sort_indices()
        object.__setattr__(self, "matrix", A)
        w = np.asarray(self.weights, dtype=float).ravel()
        if w.size != A.shape[0] or A.shape[0] != A.shape[1]:
            raise ValueError("operator must be square with one weight per row")
        object.__setattr__(self, "weights", w)

    @classmethod
    def from_matrix(cls, A, weights=None, form: str = "divergence") -> "SymmetricSparseOperator":
        A = sps.csr_matrix(np.asarray(A, dtype=float) if not sps.issparse(A) else A)
        w = np.ones(A.shape[0]) if weights is None else weights
        return cls(A, w, form)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def __matmul__(self, u):
        return self.matrix @ np.asarray(u, dtype=float).ravel()

    def apply(self, u) -> np.ndarray:
        return self @ (u.values if isinstance(u, ScalarField) else u)

    def to_dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def weighted_symmetry_defect(self) -> float:
        """``max|W A - A^T W| / max|W A|``."""
        WA = sps.diags(self.weights) @ self.matrix
        diff = abs(WA - WA.T)
        scale = abs(WA).max()
        return float(diff.max() / scale) if scale > 0 else float(diff.max())

    def export_triplets(self, stream: IO[str]) -> None:
        """Write ``row col value`` lines (0-based) preceded by a size header."""
        coo = self.matrix.tocoo()
        stream.write(f"# n={self.n} nnz={coo.nnz} form={self.form}\n")
        for r, c, v in zip(coo.row.tolist(), coo.col.tolist(), coo.data.tolist()):
            stream.write(f"{r} {c} {v!r}\n")


def read_triplets(stream: IO[str]) -> sps.csr_matrix:
    header = stream.readline()
    n = int(header.split("n=")[1].split()[0])
    rows, cols, vals = [], [], []
    for line in stream:
        if line.strip():
            r, c, v = line.split()
            rows.append(int(r))
            cols.append(int(c))
            vals.append(float(v))
    return sps.csr_matrix((vals, (rows, cols)), shape=(n, n))


# ---------------------------------------------------------------------------
# stencil pieces

def _axis_pieces(axis: Axis):
    """Face difference, zero-extension average and clamped average matrices."""
    n, dx = axis.n, axis.spacing
    if axis.periodic:
        left = np.arange(n)
        right = (left + 1) % n
    else:
        left = np.arange(-1, n)
        right = np.arange(0, n + 1)
    m = left.size
    rows = np.arange(m)
    lv, rv = left >= 0, right < n
    D = sps.csr_matrix((np.r_[np.full(rv.sum(), 1.0 / dx), np.full(lv.sum(), -1.0 / dx)],
                        (np.r_[rows[rv], rows[lv]], np.r_[right[rv], left[lv]])), shape=(m, n))
    M = sps.csr_matrix((np.full(rv.sum() + lv.sum(), 0.5),
                        (np.r_[rows[rv], rows[lv]], np.r_[right[rv], left[lv]])), shape=(m, n))
    lc, rc = np.clip(left, 0, n - 1), np.clip(right, 0, n - 1)
    avg = sps.csr_matrix((np.full(2 * m, 0.5), (np.r_[rows, rows], np.r_[lc, rc])), shape=(m, n))
    return D, M, avg


def _lift(mats, axis: int, dim: int):
    """Kronecker-lift per-axis matrices; ``mats[a]`` acts on axis ``a``."""
    out = mats[0]
    for a in range(1, dim):
        out = sps.kron(out, mats[a], format="csr")
    return sps.csr_matrix(out)


def _stiffness(grid: Grid, K: np.ndarray) -> sps.csr_matrix:
    """Symmetric ``S`` with ``u^T S v = sum_faces C (D u)(D v) + cross``."""
    d = grid.dimension
    pieces = [_axis_pieces(a) for a in grid.axes]
    eyes = [sps.identity(a.n, format="csr") for a in grid.axes]
    S = sps.csr_matrix((grid.size, grid.size))
    for a in range(d):
        Da = _lift([pieces[b][0] if b == a else eyes[b] for b in range(d)], a, d)
        Aa = _lift([pieces[b][2] if b == a else eyes[b] for b in range(d)], a, d)
        C = Aa @ K[:, a, a]
        S = S + Da.T @ sps.diags(C) @ Da
    if d == 2 and np.any(K[:, 0, 1] != 0):
        (Dx, Mx, Ax), (Dy, My, Ay) = pieces
        Gx = sps.kron(Dx, My, format="csr")
        Gy = sps.kron(Mx, Dy, format="csr")
        C12 = sps.kron(Ax, Ay, format="csr") @ K[:, 0, 1]
        cross = Gx.T @ sps.diags(C12) @ Gy
        S = S + cross + cross.T
    return sps.csr_matrix(S)


def _coefficient_tensor(metric: MetricField, weight: np.ndarray) -> np.ndarray:
    return weight[:, None, None] * metric.inverse


def assemble_from_coefficients(grid: Grid, K: np.ndarray, density: np.ndarray,
                               form: str = "divergence") -> SymmetricSparseOperator:
    """``(1/density) d_i (K^ij d_j .)`` with flux coefficients ``K`` at nodes."""
    density = np.asarray(density, dtype=float)
    S = _stiffness(grid, K)
    A = -(sps.diags(1.0 / density) @ S)
    return SymmetricSparseOperator(A, density * grid.cell_volume, form, None, grid)


def assemble_weighted_laplacian(wm: WeightedManifold) -> SymmetricSparseOperator:
    """Discrete ``Delta_mu = (1/m) d_i (m h^ij d_j)``; negative semi-definite."""
    m = wm.weight.values
    return assemble_from_coefficients(wm.grid, _coefficient_tensor(wm.metric, m), m)


def dirichlet_form(u, v, wm: WeightedManifold) -> float:
    """``sum_faces C (grad u)(grad v) prod(dx)`` evaluated with array differencing.

    This is the right-hand side of the discrete Green formula and is computed
    without the sparse matrices used for assembly.
    """
    grid = wm.grid
    shape = grid.shape
    U = np.asarray(getattr(u, "values", u), float).reshape(shape)
    V = np.asarray(getattr(v, "values", v), float).reshape(shape)
    K = _coefficient_tensor(wm.metric, wm.weight.values).reshape(*shape, grid.dimension,
                                                                 grid.dimension)
    total = 0.0
    for a, axis in enumerate(grid.axes):
        dx = axis.spacing
        Kaa = K[..., a, a]
        if axis.periodic:
            du = (np.roll(U, -1, a) - U) / dx
            dv = (np.roll(V, -1, a) - V) / dx
            Cf = 0.5 * (Kaa + np.roll(Kaa, -1, a))
        else:
            pad = [(0, 0)] * grid.dimension
            pad[a] = (1, 1)
            du = np.diff(np.pad(U, pad), axis=a) / dx
            dv = np.diff(np.pad(V, pad), axis=a) / dx
            Kp = np.pad(Kaa, pad, mode="edge")
            Cf = 0.5 * (np.take(Kp, range(Kp.shape[a] - 1), axis=a)
                        + np.take(Kp, range(1, Kp.shape[a]), axis=a))
        total += float(np.sum(Cf * du * dv))
    if grid.dimension == 2:
        K12 = K[..., 0, 1]
        if np.any(K12 != 0):
            def cellpad(F, coeff):
                for a, axis in enumerate(grid.axes):
                    if axis.periodic:
                        F = np.concatenate([F, np.take(F, [0], axis=a)], axis=a)
                    else:
                        pad = [(0, 0), (0, 0)]
                        pad[a] = (1, 1)
                        F = np.pad(F, pad, mode="edge" if coeff else "constant")
                return F

            def grads(F):
                Fp = cellpad(F, False)
                dx, dy = grid.spacings
                gx = 0.5 * ((Fp[1:, :-1] - Fp[:-1, :-1]) + (Fp[1:, 1:] - Fp[:-1, 1:])) / dx
                gy = 0.5 * ((Fp[:-1, 1:] - Fp[:-1, :-1]) + (Fp[1:, 1:] - Fp[1:, :-1])) / dy
                return gx, gy

            Kp = cellpad(K12, True)
            C12 = 0.25 * (Kp[:-1, :-1] + Kp[1:, :-1] + Kp[:-1, 1:] + Kp[1:, 1:])
            gxu, gyu = grads(U)
            gxv, gyv = grads(V)
            total += float(np.sum(C12 * (gxu * gyv + gyu * gxv)))
    return total * grid.cell_volume


def verify_green_formula(op: SymmetricSparseOperator, u, v, wm: WeightedManifold) -> float:
    """``|<u, op v>_W - RHS|`` for ``op`` a weighted Laplacian or a ``w^2``.

    For a Laplacian the right-hand side is ``-E(u, v)``; for ``w^2 = -Delta + q``
    it is ``E(u, v) + <u, q v>``.
    """
    uu = np.asarray(getattr(u, "values", u), float).ravel()
    vv = np.asarray(getattr(v, "values", v), float).ravel()
    if uu.size != wm.grid.size or op.n != wm.grid.size:
        raise GridError("fields, operator and manifold must share the grid")
    lhs = float(np.sum(uu * (op @ vv) * op.weights))
    energy = dirichlet_form(uu, vv, wm)
    if op.potential is None:
        rhs = -energy
    else:
        rhs = energy + float(np.sum(uu * op.potential * vv * wm.node_weights))
    return abs(lhs - rhs)


# ---------------------------------------------------------------------------
# Klein-Gordon spatial operator

def _as_fields(N, h, V, grid):
    grid = grid or N.grid
    if not isinstance(N, ScalarField):
        N = ScalarField.from_expr(N, grid)
    if not isinstance(h, MetricField):
        h = h.evaluate(grid) if isinstance(h, MetricExpr) else MetricField(grid, h)
    if not isinstance(V, ScalarField):
        V = ScalarField.from_expr(V, grid) if isinstance(V, (Expr, str)) else \
            ScalarField(grid, np.broadcast_to(np.asarray(V, float), (grid.size,)))
    N.require_positive("lapse N")
    return N, h, V, grid


def assemble_w2(N, h, V, grid: Grid | None = None) -> SymmetricSparseOperator:
    """``w^2 = -Delta~_mu~ + N^2 V`` on the rescaled slice, symmetric in ``L^2(mu~)``."""
    N, h, V, grid = _as_fields(N, h, V, grid)
    wt = tilde_manifold(N, h, grid)
    lap = assemble_weighted_laplacian(wt)
    q = N.values ** 2 * V.values
    A = -lap.matrix + sps.diags(q)
    return SymmetricSparseOperator(A, lap.weights, "divergence", q, grid)


def _centered(axis: Axis) -> sps.csr_matrix:
    n, dx = axis.n, axis.spacing
    idx = np.arange(n)
    if axis.periodic:
        rows = np.r_[idx, idx]
        cols = np.r_[(idx + 1) % n, (idx - 1) % n]
        vals = np.r_[np.full(n, 0.5 / dx), np.full(n, -0.5 / dx)]
    else:
        up, dn = idx[:-1], idx[1:]
        rows = np.r_[up, dn]
        cols = np.r_[up + 1, dn - 1]
        vals = np.r_[np.full(n - 1, 0.5 / dx), np.full(n - 1, -0.5 / dx)]
    return sps.csr_matrix((vals, (rows, cols)), shape=(n, n))


def _gradient_values(F: np.ndarray, grid: Grid) -> list[np.ndarray]:
    """Centred differences of node data; one-sided second order at non-periodic edges."""
    A = F.reshape(grid.shape)
    out = []
    for a, axis in enumerate(grid.axes):
        if axis.periodic:
            g = (np.roll(A, -1, a) - np.roll(A, 1, a)) / (2 * axis.spacing)
        else:
            g = np.gradient(A, axis.spacing, axis=a, edge_order=2)
        out.append(g.ravel())
    return out


def assemble_w2_expanded(N, h, V, grid: Grid | None = None) -> SymmetricSparseOperator:
    """``-N^2 (Delta_h - V) - N h^ij (d_i N) d_j`` assembled term by term.

    Independent of :func:`assemble_w2` apart from reusing the flux stencil for
    ``Delta_h``; the first-order term uses centred differences.  The result is
    not weighted-symmetric in general.
    """
    N, h, V, grid = _as_fields(N, h, V, grid)
    d = grid.dimension
    plain = WeightedManifold.from_density(h)
    lap_h = assemble_weighted_laplacian(plain)
    N2 = N.values ** 2
    A = -(sps.diags(N2) @ lap_h.matrix) + sps.diags(N2 * V.values)
    dN = _gradient_values(N.values, grid)
    hinv = h.inverse
    eyes = [sps.identity(a.n, format="csr") for a in grid.axes]
    for j in range(d):
        Dj = _lift([_centered(grid.axes[b]) if b == j else eyes[b] for b in range(d)], j, d)
        coeff = sum(hinv[:, i, j] * dN[i] for i in range(d)) * N.values
        if np.any(coeff != 0):
            A = A - sps.diags(coeff) @ Dj
    wt = N.values ** -1 * h.sqrt_det * grid.cell_volume
    return SymmetricSparseOperator(A, wt, "expanded", N2 * V.values, grid)


def w2_continuum(N, h: MetricExpr, V, u, dimension: int, t: float = 0.0) -> Expr:
    """Symbolic ``w^2 u = -(N/sqrt|h|) d_i(sqrt|h| N h^ij d_j u) + N^2 V u``."""
    coords = (X, Y)[:dimension]
    sub = lambda e: Expr.coerce(e).substitute_time(t).sym  # noqa: E731
    Ns, Vs, us = sub(N), sub(V), sub(u)
    H = h.matrix().subs(T, t)
    Hinv = H.inv()
    sd = sp.sqrt(H.det())
    flux = 0
    for i, xi in enumerate(coords):
        inner = sum(Hinv[i, j] * sp.diff(us, xj) for j, xj in enumerate(coords))
        flux += sp.diff(sd * Ns * inner, xi)
    return Expr(-Ns / sd * flux + Ns ** 2 * Vs * us)
