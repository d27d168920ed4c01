"""Sparse matrices and linear solvers with an explicit accuracy contract.

CSR storage and factorizations are delegated to scipy; every accepted
solve asserts its relative residual rather than assuming it.  The
``CachedLU`` helper reuses one factorization across the slowly drifting
operators of the time steppers via iterative refinement, refactorizing
only when refinement stalls.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sparse
import scipy.sparse.linalg as spla

from .errors import ConfigurationError, SolverError

#: Assembled operators are scipy CSR matrices with sorted, unique indices.
SparseMatrix = sparse.csr_matrix

DIRECT_RESIDUAL_TOL = 1e-10


@dataclass(frozen=True)
class SolverSpec:
    """Linear solver selection. ``rtol`` is a relative residual bound."""

    method: str = "direct"        # "direct" | "iterative"
    max_iter: int = 2000
    rtol: float = 1e-12

    def __post_init__(self):
        if self.method not in ("direct", "iterative"):
            raise ConfigurationError(f"unknown solver method {self.method!r}")
        if not 0.0 < self.rtol <= 1e-6:
            raise ConfigurationError(
                f"solver tolerance must lie in (0, 1e-6], got {self.rtol}")
        if self.max_iter < 1:
            raise ConfigurationError("max_iter must be positive")


def csr_from_triplets(shape, rows, cols, vals) -> SparseMatrix:
    """Compress COO triplets, summing duplicates and sorting indices."""
    mat = sparse.coo_matrix((vals, (rows, cols)), shape=shape).tocsr()
    mat.sum_duplicates()
    mat.sort_indices()
    return mat


def spmv(A, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if A.shape[1] != x.shape[0]:
        raise ConfigurationError(
            f"dimension mismatch: matrix {A.shape}, vector {x.shape}")
    return A @ x


def residual_norm(A, x, b) -> float:
    return float(np.linalg.norm(b - A @ x))


def _residual_floor(A, x) -> float:
    """Attainable residual: rounding already pollutes b - Ax at this level,
    so no solver can certify below it (normwise backward-error bound)."""
    row_nnz = int(np.diff(A.indptr).max()) if A.nnz else 1
    norm_a = float(np.abs(A.data).max()) * row_nnz if A.nnz else 0.0
    return 64.0 * np.finfo(float).eps * norm_a * float(np.linalg.norm(x))


def solve(A, b, spec: SolverSpec = SolverSpec()) -> np.ndarray:
    """Solve A x = b and assert the residual contract of ``spec``."""
    b = np.asarray(b, dtype=float)
    if A.shape[0] != A.shape[1] or A.shape[1] != b.shape[0]:
        raise ConfigurationError(
            f"solve needs a square system, got {A.shape} and {b.shape}")
    if not np.all(np.isfinite(b)):
        raise ConfigurationError("right-hand side contains non-finite entries")
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return np.zeros_like(b)

    if spec.method == "direct":
        try:
            lu = spla.splu(A.tocsc())
            x = lu.solve(b)
        except RuntimeError as exc:
            raise SolverError(f"direct factorization failed: {exc}") from exc
        res = residual_norm(A, x, b)
        bound = DIRECT_RESIDUAL_TOL * bnorm + _residual_floor(A, x)
        if not np.isfinite(res) or res > bound:
            raise SolverError(
                f"direct solve residual {res:.3e} exceeds "
                f"{DIRECT_RESIDUAL_TOL:.1e}*|b| = {bound:.3e}", residual=res)
        return x

    precond = _diagonal_preconditioner(A)
    x, info = spla.gmres(A, b, rtol=spec.rtol, atol=0.0,
                         maxiter=spec.max_iter, M=precond, restart=50)
    res = residual_norm(A, x, b)
    if info != 0 or res > spec.rtol * bnorm + _residual_floor(A, x):
        raise SolverError(
            f"iterative solve did not converge (info={info}), "
            f"residual {res:.3e}", residual=res)
    return x


def _diagonal_preconditioner(A):
    d = A.diagonal()
    d = np.where(np.abs(d) > 0, d, 1.0)
    return spla.LinearOperator(A.shape, matvec=lambda v: v / d)


class CachedLU:
    """LU with iterative refinement against a drifting operator.

    ``solve(A, b)`` always returns a solution of the *current* A with
    relative residual below ``rtol``; the cached factorization merely
    accelerates it.  When refinement converges too slowly the operator is
    refactorized, so accuracy never depends on how stale the cache is.
    """

    def __init__(self, rtol: float = 1e-12, max_refine: int = 12):
        self.rtol = rtol
        self.max_refine = max_refine
        self.num_factorizations = 0
        self.num_solves = 0
        self._lu = None
        self._stale = True

    def invalidate(self):
        self._stale = True

    def _factorize(self, A):
        try:
            self._lu = spla.splu(A.tocsc())
        except RuntimeError as exc:
            raise SolverError(f"factorization failed: {exc}") from exc
        self.num_factorizations += 1
        self._stale = False

    def solve(self, A, b) -> np.ndarray:
        self.num_solves += 1
        b = np.asarray(b, dtype=float)
        bnorm = float(np.linalg.norm(b))
        if bnorm == 0.0:
            return np.zeros_like(b)
        if self._lu is None or self._stale:
            self._factorize(A)
        x = self._lu.solve(b)
        r = b - A @ x
        rnorm = float(np.linalg.norm(r))
        bound = self.rtol * bnorm + _residual_floor(A, x)
        refinements = 0
        while rnorm > bound and refinements < self.max_refine:
            x += self._lu.solve(r)
            r = b - A @ x
            rnew = float(np.linalg.norm(r))
            if not np.isfinite(rnew) or rnew > 0.5 * rnorm:
                break  # stalled: the cached factorization has drifted too far
            rnorm = rnew
            refinements += 1
        if rnorm > bound:
            self._factorize(A)
            x = self._lu.solve(b)
            r = b - A @ x
            rnorm = float(np.linalg.norm(r))
            bound = self.rtol * bnorm + _residual_floor(A, x)
            for _ in range(self.max_refine):
                if rnorm <= bound:
                    break
                x += self._lu.solve(r)
                r = b - A @ x
                rnorm = float(np.linalg.norm(r))
        elif refinements >= 4:
            self._stale = True  # refresh next time rather than limp along
        if not np.isfinite(rnorm) or rnorm > bound:
            raise SolverError(
                f"refined solve residual {rnorm:.3e} exceeds "
                f"{self.rtol:.1e}*|b| + floor = {bound:.3e} (|b| = {bnorm:.3e})",
                residual=rnorm)
        return x


def write_matrix_market(path, A):
    """Dump a matrix in MatrixMarket coordinate format (debugging aid)."""
    from scipy.io import mmwrite
    mmwrite(str(path), A)
