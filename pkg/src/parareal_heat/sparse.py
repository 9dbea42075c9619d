"""Sparse matrices and the linear-algebra kernels used by the integrators.

The CSR matrix-vector product and the preconditioned conjugate gradient loop
exist in two flavours: a numba kernel (``nogil``, so slice workers really run
concurrently) and a pure-numpy version.  ``PARAREAL_HEAT_NUMBA=0`` selects the
numpy one; both are importable for testing and benchmarking.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg
import scipy.special

from ._accel import NUMBA_ENABLED, njit
from .errors import SolverError

__all__ = [
    "SparseMatrix",
    "SolverConfig",
    "BlockFactorization",
    "SparseBlockFactorization",
    "SingularValueEstimate",
    "csr_matvec",
    "solve_spd",
    "solve_block2",
    "factor_block2",
    "max_singular_value",
    "erf",
]


# --------------------------------------------------------------------------
# kernels


def _csr_matvec_loop(indptr, indices, data, x, out):
    n = indptr.shape[0] - 1
    for i in range(n):
        acc = 0.0
        for jj in range(indptr[i], indptr[i + 1]):
            acc += data[jj] * x[indices[jj]]
        out[i] = acc
    return out


csr_matvec_numba = njit(_csr_matvec_loop)


def csr_matvec_numpy(indptr, indices, data, x, out):
    n = indptr.shape[0] - 1
    if data.shape[0] == 0:
        out[:] = 0.0
        return out
    rows = np.repeat(np.arange(n), np.diff(indptr))
    out[:] = np.bincount(rows, weights=data * x[indices], minlength=n)
    return out


def _pcg_loop(indptr, indices, data, diag_inv, b, x, rtol, max_iter):
    """Jacobi-preconditioned CG from the initial guess ``x`` (updated in place).

    Aims for ``rtol`` and returns ``(iterations, relative_residual)`` where
    the residual is the true one, recomputed after the recurrence claims
    convergence.  Stops early once restarts stop reducing it.
    """
    n = b.shape[0]
    bnorm = 0.0
    for i in range(n):
        bnorm += b[i] * b[i]
    bnorm = np.sqrt(bnorm)
    if bnorm == 0.0:
        for i in range(n):
            x[i] = 0.0
        return 0, 0.0
    target = rtol * bnorm
    r = np.empty(n)
    z = np.empty(n)
    p = np.empty(n)
    q = np.empty(n)
    iterations = 0
    relres = np.inf
    prev = np.inf
    # the recurrence residual drifts from the true one; restart until both
    # agree or the true residual stagnates
    for _restart in range(4):
        csr_matvec_numba(indptr, indices, data, x, q)
        rr = 0.0
        rz = 0.0
        for i in range(n):
            r[i] = b[i] - q[i]
            z[i] = diag_inv[i] * r[i]
            p[i] = z[i]
            rr += r[i] * r[i]
            rz += r[i] * z[i]
        relres = np.sqrt(rr) / bnorm
        if np.sqrt(rr) <= target or relres > 0.5 * prev:
            return iterations, relres
        prev = relres
        while iterations < max_iter:
            csr_matvec_numba(indptr, indices, data, p, q)
            pq = 0.0
            for i in range(n):
                pq += p[i] * q[i]
            if pq <= 0.0:
                break
            alpha = rz / pq
            rr = 0.0
            rz_new = 0.0
            for i in range(n):
                x[i] += alpha * p[i]
                r[i] -= alpha * q[i]
                z[i] = diag_inv[i] * r[i]
                rr += r[i] * r[i]
                rz_new += r[i] * z[i]
            iterations += 1
            if np.sqrt(rr) <= target:
                break
            beta = rz_new / rz
            rz = rz_new
            for i in range(n):
                p[i] = z[i] + beta * p[i]
        if iterations >= max_iter:
            break
    csr_matvec_numba(indptr, indices, data, x, q)
    rr = 0.0
    for i in range(n):
        d = b[i] - q[i]
        rr += d * d
    return iterations, np.sqrt(rr) / bnorm


def pcg_numpy(indptr, indices, data, diag_inv, b, x, rtol, max_iter):
    """Pure-numpy twin of the compiled CG loop, same algorithm and return."""
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        x[:] = 0.0
        return 0, 0.0
    target = rtol * bnorm
    q = np.empty_like(b)
    iterations = 0
    relres = np.inf
    prev = np.inf
    for _restart in range(4):
        r = b - csr_matvec_numpy(indptr, indices, data, x, q)
        z = diag_inv * r
        p = z.copy()
        rz = r @ z
        rnorm = np.linalg.norm(r)
        relres = rnorm / bnorm
        if rnorm <= target or relres > 0.5 * prev:
            return iterations, relres
        prev = relres
        while iterations < max_iter:
            csr_matvec_numpy(indptr, indices, data, p, q)
            pq = p @ q
            if pq <= 0.0:
                break
            alpha = rz / pq
            x += alpha * p
            r -= alpha * q
            z = diag_inv * r
            iterations += 1
            if np.linalg.norm(r) <= target:
                break
            rz_new = r @ z
            p = z + (rz_new / rz) * p
            rz = rz_new
        if iterations >= max_iter:
            break
    r = b - csr_matvec_numpy(indptr, indices, data, x, q)
    return iterations, np.linalg.norm(r) / bnorm


pcg_numba = njit(_pcg_loop)

if NUMBA_ENABLED:
    csr_matvec = csr_matvec_numba
    _pcg = pcg_numba
else:
    csr_matvec = csr_matvec_numpy
    _pcg = pcg_numpy


# --------------------------------------------------------------------------
# matrix type


class SparseMatrix:
    """Square CSR matrix with a kernel-backed matrix-vector product.

    Storage is plain ``indptr``/``indices``/``data`` arrays; scipy is only
    used to build and reshape them.
    """

    __slots__ = ("indptr", "indices", "data", "shape", "_diag")

    def __init__(self, indptr, indices, data, shape):
        self.indptr = np.ascontiguousarray(indptr, dtype=np.int64)
        self.indices = np.ascontiguousarray(indices, dtype=np.int64)
        self.data = np.ascontiguousarray(data, dtype=np.float64)
        self.shape = (int(shape[0]), int(shape[1]))
        if self.shape[0] != self.shape[1]:
            raise ValueError(f"SparseMatrix must be square, got {self.shape}")
        self._diag = None

    @classmethod
    def from_scipy(cls, mat) -> "SparseMatrix":
        csr = scipy.sparse.csr_matrix(mat, dtype=np.float64)
        csr.sum_duplicates()
        csr.sort_indices()
        return cls(csr.indptr, csr.indices, csr.data, csr.shape)

    @classmethod
    def from_dense(cls, arr) -> "SparseMatrix":
        return cls.from_scipy(scipy.sparse.csr_matrix(np.atleast_2d(np.asarray(arr, dtype=float))))

    @classmethod
    def from_triplets(cls, rows, cols, vals, n: int) -> "SparseMatrix":
        """Sum duplicate ``(row, col)`` entries into an ``n x n`` matrix."""
        coo = scipy.sparse.coo_matrix((vals, (rows, cols)), shape=(n, n))
        return cls.from_scipy(coo.tocsr())

    @property
    def dim(self) -> int:
        return self.shape[0]

    @property
    def nnz(self) -> int:
        return self.data.shape[0]

    def to_scipy(self) -> scipy.sparse.csr_matrix:
        return scipy.sparse.csr_matrix((self.data, self.indices, self.indptr), shape=self.shape)

    def toarray(self) -> np.ndarray:
        return self.to_scipy().toarray()

    def diagonal(self) -> np.ndarray:
        if self._diag is None:
            self._diag = self.to_scipy().diagonal()
        return self._diag

    def matvec(self, x: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
        x = np.ascontiguousarray(x, dtype=np.float64)
        if x.shape != (self.shape[1],):
            raise ValueError(f"vector of shape {x.shape} does not match matrix {self.shape}")
        if out is None:
            out = np.empty(self.shape[0])
        return csr_matvec(self.indptr, self.indices, self.data, x, out)

    def __matmul__(self, x):
        return self.matvec(x)

    def linear_combination(self, alpha: float, other: "SparseMatrix", beta: float) -> "SparseMatrix":
        """``alpha*self + beta*other``; fast path when both share one pattern."""
        if (
            self.shape == other.shape
            and self.nnz == other.nnz
            and np.array_equal(self.indptr, other.indptr)
            and np.array_equal(self.indices, other.indices)
        ):
            return SparseMatrix(self.indptr, self.indices, alpha * self.data + beta * other.data, self.shape)
        return SparseMatrix.from_scipy(alpha * self.to_scipy() + beta * other.to_scipy())

    def scaled(self, alpha: float) -> "SparseMatrix":
        return SparseMatrix(self.indptr, self.indices, alpha * self.data, self.shape)

    def submatrix(self, keep: np.ndarray) -> "SparseMatrix":
        """Restrict rows and columns to the index array ``keep``."""
        csr = self.to_scipy()
        return SparseMatrix.from_scipy(csr[keep][:, keep])

    def norm_inf(self) -> float:
        if self.nnz == 0:
            return 0.0
        return float(np.max(abs(self.to_scipy()).sum(axis=1)))

    def is_symmetric(self, rtol: float = 1e-13) -> bool:
        csr = self.to_scipy()
        diff = abs(csr - csr.T)
        scale = abs(csr).max() if self.nnz else 0.0
        return diff.nnz == 0 or diff.max() <= rtol * scale

    def __repr__(self):
        return f"SparseMatrix(shape={self.shape}, nnz={self.nnz})"


# --------------------------------------------------------------------------
# solvers


@dataclass(frozen=True)
class SolverConfig:
    """Linear solver tolerance; ``max_iter=None`` means ``10 * d``."""

    rel_tol: float = 1e-12
    max_iter: int | None = None

    def __post_init__(self):
        if not 0.0 < self.rel_tol < 1.0:
            raise ValueError(f"rel_tol must lie in (0, 1), got {self.rel_tol}")
        if self.max_iter is not None and self.max_iter < 1:
            raise ValueError(f"max_iter must be >= 1, got {self.max_iter}")

    def iteration_cap(self, dim: int) -> int:
        return self.max_iter if self.max_iter is not None else max(10 * dim, 10)


DEFAULT_SOLVER = SolverConfig()
POLISH = 1e-2


def solve_spd(A: SparseMatrix, rhs: np.ndarray, cfg: SolverConfig | None = None) -> np.ndarray:
    """Solve ``A x = rhs`` for symmetric positive definite ``A`` by Jacobi-PCG.

    Raises :class:`SolverError` if the relative residual does not drop below
    ``cfg.rel_tol`` within the iteration cap.
    """
    cfg = cfg or DEFAULT_SOLVER
    rhs = np.ascontiguousarray(rhs, dtype=np.float64)
    if rhs.shape != (A.dim,):
        raise ValueError(f"rhs of shape {rhs.shape} does not match matrix {A.shape}")
    diag = A.diagonal()
    if np.any(diag <= 0.0):
        raise SolverError("matrix has a non-positive diagonal entry; not SPD")
    x = np.zeros(A.dim)
    # aim below the contract so that nearby right-hand sides give nearby
    # solutions; only the contract itself is enforced
    goal = max(cfg.rel_tol * POLISH, 1e-16)
    iters, relres = _pcg(A.indptr, A.indices, A.data, 1.0 / diag, rhs, x, goal, cfg.iteration_cap(A.dim))
    if not relres <= cfg.rel_tol:
        raise SolverError(
            f"CG stopped after {iters} iterations with relative residual {relres:.3e} "
            f"(tolerance {cfg.rel_tol:.1e})",
            residual=float(relres),
            iterations=int(iters),
        )
    return x


class BlockFactorization:
    """Dense LU of the ``2d x 2d`` block matrix ``[[A11, A12], [A21, A22]]``."""

    def __init__(self, A11, A12, A21, A22):
        d = A11.dim
        dense = np.empty((2 * d, 2 * d))
        dense[:d, :d] = A11.toarray()
        dense[:d, d:] = A12.toarray()
        dense[d:, :d] = A21.toarray()
        dense[d:, d:] = A22.toarray()
        self.d = d
        self._lu, piv = scipy.linalg.lu_factor(dense, check_finite=False)
        # row swaps as one permutation, applied before two triangular solves
        perm = np.arange(2 * d)
        for i, j in enumerate(piv):
            perm[i], perm[j] = perm[j], perm[i]
        self._perm = perm

    def solve(self, rhs1: np.ndarray, rhs2: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        # LAPACK getrs (behind lu_solve) is not reentrant in some OpenBLAS
        # builds; the trsv-based triangular solves are
        b = np.concatenate([rhs1, rhs2])[self._perm]
        z = scipy.linalg.solve_triangular(self._lu, b, lower=True, unit_diagonal=True, check_finite=False)
        x = scipy.linalg.solve_triangular(self._lu, z, lower=False, check_finite=False)
        return x[: self.d], x[self.d :]


class SparseBlockFactorization:
    """Sparse LU (SuperLU) of the same block matrix, for systems too big for dense LU."""

    def __init__(self, A11, A12, A21, A22):
        self.d = A11.dim
        full = scipy.sparse.bmat(
            [[A11.to_scipy(), A12.to_scipy()], [A21.to_scipy(), A22.to_scipy()]], format="csc"
        )
        self._lu = scipy.sparse.linalg.splu(full)

    def solve(self, rhs1: np.ndarray, rhs2: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        x = self._lu.solve(np.concatenate([rhs1, rhs2]))
        return x[: self.d], x[self.d :]


def factor_block2(A11, A12, A21, A22, dense_limit: int | None = None):
    """Reusable factorization: dense LU up to ``dense_limit`` dofs, sparse LU above."""
    limit = DENSE_BLOCK_LIMIT if dense_limit is None else dense_limit
    if A11.dim <= limit:
        return BlockFactorization(A11, A12, A21, A22)
    return SparseBlockFactorization(A11, A12, A21, A22)


DENSE_BLOCK_LIMIT = 2000


def _fgmres(matvec, precond, b, rtol, max_iter, restart=40):
    """Restarted flexible GMRES; returns ``(x, iterations, relative_residual)``.

    Stops at ``rtol`` or when a restart cycle fails to halve the residual.
    """
    n = b.shape[0]
    bnorm = np.linalg.norm(b)
    x = np.zeros(n)
    if bnorm == 0.0:
        return x, 0, 0.0
    total = 0
    r = b.copy()
    beta = bnorm
    prev = np.inf
    while total < max_iter and beta <= 0.5 * prev:
        prev = beta
        m = min(restart, max_iter - total)
        V = np.zeros((m + 1, n))
        Z = np.zeros((m, n))
        H = np.zeros((m + 1, m))
        cs = np.zeros(m)
        sn = np.zeros(m)
        g = np.zeros(m + 1)
        g[0] = beta
        V[0] = r / beta
        j_used = 0
        for j in range(m):
            Z[j] = precond(V[j])
            w = matvec(Z[j])
            # modified Gram-Schmidt, twice for stability
            for _ in range(2):
                for i in range(j + 1):
                    h = V[i] @ w
                    H[i, j] += h
                    w -= h * V[i]
            H[j + 1, j] = np.linalg.norm(w)
            if H[j + 1, j] > 0.0:
                V[j + 1] = w / H[j + 1, j]
            for i in range(j):
                tmp = cs[i] * H[i, j] + sn[i] * H[i + 1, j]
                H[i + 1, j] = -sn[i] * H[i, j] + cs[i] * H[i + 1, j]
                H[i, j] = tmp
            denom = np.hypot(H[j, j], H[j + 1, j])
            cs[j] = H[j, j] / denom if denom else 1.0
            sn[j] = H[j + 1, j] / denom if denom else 0.0
            H[j, j] = denom
            H[j + 1, j] = 0.0
            g[j + 1] = -sn[j] * g[j]
            g[j] = cs[j] * g[j]
            j_used = j + 1
            total += 1
            if abs(g[j + 1]) <= 0.1 * rtol * bnorm or H[j, j] == 0.0:
                break
        y = scipy.linalg.solve_triangular(H[:j_used, :j_used], g[:j_used])
        x += y @ Z[:j_used]
        r = b - matvec(x)
        beta = np.linalg.norm(r)
        if beta <= rtol * bnorm:
            break
    return x, total, beta / bnorm


INNER_RTOL = 1e-8


def _pcg_inexact(A: SparseMatrix, rhs: np.ndarray, rtol: float) -> np.ndarray:
    x = np.zeros(A.dim)
    _pcg(A.indptr, A.indices, A.data, 1.0 / A.diagonal(), np.ascontiguousarray(rhs), x, rtol, 10 * A.dim)
    return x


def solve_block2(
    A11: SparseMatrix,
    A12: SparseMatrix,
    A21: SparseMatrix,
    A22: SparseMatrix,
    rhs1: np.ndarray,
    rhs2: np.ndarray,
    cfg: SolverConfig | None = None,
    dense_limit: int = DENSE_BLOCK_LIMIT,
) -> tuple[np.ndarray, np.ndarray]:
    """Solve the coupled system ``[[A11, A12], [A21, A22]] (x1, x2) = (rhs1, rhs2)``.

    Small systems (``d <= dense_limit``) go through a dense LU.  Larger ones
    use flexible GMRES preconditioned by the block diagonal, each diagonal
    block inverted approximately by CG, so ``A11`` and ``A22`` must be SPD.
    """
    cfg = cfg or DEFAULT_SOLVER
    d = A11.dim
    for blk in (A12, A21, A22):
        if blk.dim != d:
            raise ValueError("all four blocks must have the same dimension")
    rhs1 = np.asarray(rhs1, dtype=float)
    rhs2 = np.asarray(rhs2, dtype=float)
    if d <= dense_limit:
        return BlockFactorization(A11, A12, A21, A22).solve(rhs1, rhs2)

    def matvec(v):
        v1, v2 = v[:d], v[d:]
        return np.concatenate([A11 @ v1 + A12 @ v2, A21 @ v1 + A22 @ v2])

    def precond(v):
        return np.concatenate([_pcg_inexact(A11, v[:d], INNER_RTOL), _pcg_inexact(A22, v[d:], INNER_RTOL)])

    b = np.concatenate([rhs1, rhs2])
    goal = max(cfg.rel_tol * POLISH, 1e-16)
    x, iters, relres = _fgmres(matvec, precond, b, goal, cfg.iteration_cap(2 * d))
    if not relres <= cfg.rel_tol:
        raise SolverError(
            f"block GMRES stopped after {iters} iterations with relative residual {relres:.3e}",
            residual=float(relres),
            iterations=iters,
        )
    return x[:d], x[d:]


# --------------------------------------------------------------------------
# singular values


class SingularValueEstimate(NamedTuple):
    sigma: float
    converged: bool
    iterations: int


Operator = Callable[[np.ndarray], np.ndarray]


def max_singular_value(
    apply: Operator,
    apply_transpose: Operator,
    dim: int,
    tol: float = 1e-8,
    max_iter: int = 10_000,
    seed: int = 12345,
    check_adjoint: bool = False,
) -> SingularValueEstimate:
    """Largest singular value of a matrix-free operator by power iteration on ``A^T A``.

    The start vector is drawn from ``numpy.random.default_rng(seed)``, so the
    result is reproducible.  Iteration stops once the estimate ``||A v||``
    changes by at most ``tol`` relative; otherwise the last estimate is
    returned with ``converged=False``.
    """
    rng = np.random.default_rng(seed)
    if check_adjoint:
        x = rng.standard_normal(dim)
        y = rng.standard_normal(dim)
        gap = abs(apply(x) @ y - x @ apply_transpose(y))
        if gap > 1e-10 * np.linalg.norm(x) * np.linalg.norm(y) * max(1.0, np.linalg.norm(apply(x)) / np.linalg.norm(x)):
            raise ValueError(f"apply_transpose is not the adjoint of apply (mismatch {gap:.3e})")
    v = rng.standard_normal(dim)
    v /= np.linalg.norm(v)
    sigma = 0.0
    for it in range(1, max_iter + 1):
        w = apply(v)
        sigma_new = float(np.linalg.norm(w))
        if sigma_new == 0.0:
            return SingularValueEstimate(0.0, True, it)
        u = apply_transpose(w)
        unorm = np.linalg.norm(u)
        if unorm == 0.0:
            return SingularValueEstimate(sigma_new, True, it)
        v = u / unorm
        if it > 1 and abs(sigma_new - sigma) <= tol * sigma_new:
            return SingularValueEstimate(sigma_new, True, it)
        sigma = sigma_new
    return SingularValueEstimate(sigma, False, max_iter)


def erf(x):
    """Error function, elementwise; scalars in, float out."""
    out = scipy.special.erf(x)
    return float(out) if np.ndim(out) == 0 else out

