"""Smallest eigenpairs, square roots and inverses of weighted-symmetric operators.

An operator ``A`` symmetric in the weights ``W`` is symmetrised as
``B = W^1/2 A W^-1/2``.  Small problems go to a dense ``eigh``; larger ones
to a Lanczos iteration with full reorthogonalisation applied to the
shift-inverted ``(B - sigma)^-1``, with ``sigma`` below a Gershgorin bound so
the smallest eigenvalues of ``A`` are the dominant ones of the iteration.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sps
import scipy.sparse.linalg as spla

from .operators import SymmetricSparseOperator

__all__ = [
    "SpectralSummary", "ConvergenceError", "NotPositiveDefiniteError",
    "smallest_eigenpairs", "lanczos", "operator_sqrt_inverse", "SqrtInverse",
    "lambda_max_estimate", "refinement_report", "DENSE_THRESHOLD",
]

DENSE_THRESHOLD = 512
RESIDUAL_RTOL = 1e-8
RESIDUAL_ATOL = 1e-12


class ConvergenceError(RuntimeError):
    def __init__(self, msg, residuals):
        super().__init__(msg)
        self.residuals = np.asarray(residuals)


class NotPositiveDefiniteError(ValueError):
    def __init__(self, lam_min):
        super().__init__(f"operator is not positive definite: lambda_min = {lam_min:.6g}")
        self.lambda_min = lam_min


@dataclass
class SpectralSummary:
    eigenvalues: np.ndarray
    residuals: np.ndarray
    positive_definite: bool
    gap: float
    method: str
    history: list = field(default_factory=list)
    eigenvectors: np.ndarray | None = field(default=None, repr=False)
    residual_tolerance: np.ndarray | None = field(default=None, repr=False)

    @property
    def lambda_min(self) -> float:
        return float(self.eigenvalues[0])

    def to_dict(self) -> dict:
        return {
            "eigenvalues": [float(v) for v in self.eigenvalues],
            "residuals": [float(v) for v in self.residuals],
            "positive_definite": bool(self.positive_definite),
            "gap": float(self.gap),
            "method": self.method,
            "history": list(self.history),
        }


def _symmetrized(op: SymmetricSparseOperator):
    s = np.sqrt(op.weights)
    B = sps.diags(s) @ op.matrix @ sps.diags(1.0 / s)
    return sps.csr_matrix(0.5 * (B + B.T)), s


def lanczos(apply, q0: np.ndarray, m: int):
    """``m`` Lanczos steps with full reorthogonalisation.

    Returns the orthonormal basis ``Q`` (n x j) and the tridiagonal
    coefficients ``alpha`` (j) and ``beta`` (j-1); ``j < m`` on breakdown.
    """
    n = q0.size
    Q = np.zeros((n, m))
    alpha = np.zeros(m)
    beta = np.zeros(m)
    q = q0 / np.linalg.norm(q0)
    Q[:, 0] = q
    for j in range(m):
        w = apply(Q[:, j])
        alpha[j] = Q[:, j] @ w
        w -= alpha[j] * Q[:, j]
        if j > 0:
            w -= beta[j - 1] * Q[:, j - 1]
        # two passes of classical Gram-Schmidt against the whole basis
        for _ in range(2):
            w -= Q[:, :j + 1] @ (Q[:, :j + 1].T @ w)
        if j == m - 1:
            break
        b = np.linalg.norm(w)
        if b < 1e-14 * max(1.0, abs(alpha[j])):
            return Q[:, :j + 1], alpha[:j + 1], beta[:j]
        beta[j] = b
        Q[:, j + 1] = w / b
    return Q, alpha, beta[:m - 1]


def _residuals(B, lam, Y):
    R = B @ Y - Y * lam
    return np.linalg.norm(R, axis=0)


def _norm_bound(B) -> float:
    return float(np.max(np.asarray(abs(B).sum(axis=1)).ravel()))


def _tolerance(lam, scale):
    # absolute floor grows with ||B||: residuals of an exact null vector are O(eps ||B||)
    return RESIDUAL_RTOL * np.abs(lam) + RESIDUAL_ATOL * max(1.0, scale)


def smallest_eigenpairs(op: SymmetricSparseOperator, k: int = 6,
                        dense_threshold: int = DENSE_THRESHOLD,
                        max_basis: int = 600, seed: int = 0) -> SpectralSummary:
    """``k`` smallest eigenpairs of ``op`` in its weighted inner product.

    Eigenvectors are returned ``W``-orthonormal.  Residuals are
    ``||A v - lambda v||_W``.
    """
    n = op.n
    k = min(k, n)
    B, s = _symmetrized(op)
    scale = _norm_bound(B)
    if n <= dense_threshold:
        lam, Y = np.linalg.eigh(B.toarray())
        lam, Y = lam[:k], Y[:, :k]
        method = "dense"
    else:
        diag = B.diagonal()
        radius = np.asarray(abs(B).sum(axis=1)).ravel() - np.abs(diag)
        lower = float(np.min(diag - radius))
        sigma = lower - max(1.0, 1e-3 * abs(lower))
        lu = spla.splu(sps.csc_matrix(B - sigma * sps.identity(n)))
        rng = np.random.default_rng(seed)
        q0 = rng.standard_normal(n)
        m = min(n, max(4 * k + 40, 80))
        while True:
            Q, alpha, beta = lanczos(lu.solve, q0, m)
            theta, S = sla.eigh_tridiagonal(alpha, beta)
            order = np.argsort(-theta)[:k]
            lam = sigma + 1.0 / theta[order]
            Y = Q @ S[:, order]
            Y /= np.linalg.norm(Y, axis=0)
            res = _residuals(B, lam, Y)
            if np.all(res <= _tolerance(lam, scale)) or m >= n:
                break
            if m >= max_basis:
                raise ConvergenceError(
                    f"Lanczos did not converge with a basis of {m}", res)
            m = min(n, max_basis, 2 * m)
        order = np.argsort(lam)
        lam, Y = lam[order], Y[:, order]
        method = "lanczos-shift-invert"
    res = _residuals(B, lam, Y)
    V = Y / s[:, None]
    gap = float(lam[1] - lam[0]) if lam.size > 1 else float("nan")
    return SpectralSummary(lam, res, bool(lam[0] > 0), gap, method, eigenvectors=V,
                           residual_tolerance=_tolerance(lam, scale))


class SqrtInverse(NamedTuple):
    sqrt: np.ndarray
    inverse: np.ndarray
    eigenvalues: np.ndarray


def operator_sqrt_inverse(op: SymmetricSparseOperator, summary: SpectralSummary | None = None,
                          max_n: int = DENSE_THRESHOLD) -> SqrtInverse:
    """Dense ``A^1/2`` and ``A^-1`` from the weighted spectral decomposition.

    Refuses operators whose smallest eigenvalue is not positive.
    """
    if op.n > max_n:
        raise ValueError(f"dense square root limited to n <= {max_n}, got {op.n}")
    if summary is not None and not summary.positive_definite:
        raise NotPositiveDefiniteError(summary.lambda_min)
    B, s = _symmetrized(op)
    lam, Y = np.linalg.eigh(B.toarray())
    if lam[0] <= 0:
        raise NotPositiveDefiniteError(float(lam[0]))
    left, right = Y / s[:, None], Y.T * s[None, :]
    sqrt = (left * np.sqrt(lam)) @ right
    inverse = (left / lam) @ right
    return SqrtInverse(sqrt, inverse, lam)


def lambda_max_estimate(op: SymmetricSparseOperator, iterations: int = 60, seed: int = 0) -> float:
    """Power-iteration estimate of the largest eigenvalue magnitude."""
    B, _ = _symmetrized(op)
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(op.n)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iterations):
        w = B @ v
        lam = float(abs(v @ w))
        nrm = np.linalg.norm(w)
        if nrm == 0:
            return 0.0
        v = w / nrm
    return lam


def refinement_report(lambda_mins: Sequence[float], tol: float = 1e-8) -> dict:
    """Check ``lambda_min`` for non-increase across refinement levels.

    Finite differences do not produce nested trial spaces, so increases are
    listed as exceptions rather than treated as failures.
    """
    vals = [float(v) for v in lambda_mins]
    exceptions = [i + 1 for i in range(len(vals) - 1)
                  if vals[i + 1] > vals[i] + tol * max(1.0, abs(vals[i]))]
    return {"lambda_min": vals, "non_increasing": not exceptions, "exceptions": exceptions}
