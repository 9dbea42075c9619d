"""Parareal as a preconditioned fixed-point iteration.

With one-slice propagator matrices ``G`` and ``F`` the fine and coarse
sweeps are block lower-bidiagonal systems ``M_f`` and ``M_g`` on stacked
vectors ``(y_0, ..., y_N)``; Parareal is

    M_g y^{k+1} = (M_g - M_f) y^k + b,

so its error is propagated by ``E = I - M_g^{-1} M_f``.  Everything here is
matrix-free over the stack, with dense ``d x d`` slice blocks.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, UnsupportedConfigurationError
from .integrators import Propagator
from .sparse import SingularValueEstimate, max_singular_value

__all__ = [
    "build_propagator_matrix",
    "IterationOperator",
    "NilpotencyReport",
    "check_nilpotent",
    "estimate_sigma_max",
    "convergence_bound",
    "MAX_DENSE_DOFS",
]

MAX_DENSE_DOFS = 5000


def build_propagator_matrix(spec: Propagator, slice_length: float, workers: int = 1) -> np.ndarray:
    """Dense matrix of one slice of ``spec``: column ``j`` is the image of ``e_j``."""
    if not spec.nu.is_constant:
        raise UnsupportedConfigurationError(
            f"propagator matrices need a time-independent nu, got the {spec.nu.kind.value} profile"
        )
    d = spec.system.d
    if d > MAX_DENSE_DOFS:
        raise ConfigurationError(f"{d} dofs exceed the dense limit of {MAX_DENSE_DOFS}")
    eye = np.eye(d)

    def column(j):
        return spec(eye[j], 0.0, slice_length)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            cols = list(ex.map(column, range(d)))
    else:
        cols = [column(j) for j in range(d)]
    return np.column_stack(cols)


@dataclass(eq=False)
class IterationOperator:
    """``E = I - M_g^{-1} M_f`` for ``N`` slices with blocks ``G``, ``F``.

    Stacked vectors have ``(N + 1) * d`` entries; all ``apply_*`` methods
    accept flat or ``(N + 1, d)`` input and return the same shape.
    """

    N: int
    G: np.ndarray
    F: np.ndarray
    _GT: np.ndarray = field(init=False, repr=False)
    _FT: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.G = np.asarray(self.G, dtype=float)
        self.F = np.asarray(self.F, dtype=float)
        if self.G.ndim != 2 or self.G.shape != self.F.shape or self.G.shape[0] != self.G.shape[1]:
            raise ValueError(f"G {self.G.shape} and F {self.F.shape} must be equal square matrices")
        self._GT = np.ascontiguousarray(self.G.T)
        self._FT = np.ascontiguousarray(self.F.T)

    @property
    def d(self) -> int:
        return self.G.shape[0]

    @property
    def dim(self) -> int:
        return (self.N + 1) * self.d

    def _blocks(self, x):
        x = np.asarray(x, dtype=float)
        if x.size != self.dim:
            raise ValueError(f"stacked vector has {x.size} entries, expected {self.dim}")
        return x.reshape(self.N + 1, self.d), x.shape

    def apply_Mf(self, x):
        X, shape = self._blocks(x)
        R = X.copy()
        R[1:] -= X[:-1] @ self._FT
        return R.reshape(shape)

    def apply_Mf_T(self, x):
        X, shape = self._blocks(x)
        R = X.copy()
        R[:-1] -= X[1:] @ self.F
        return R.reshape(shape)

    def apply_Mg(self, x):
        X, shape = self._blocks(x)
        R = X.copy()
        R[1:] -= X[:-1] @ self._GT
        return R.reshape(shape)

    def apply_Mg_inverse(self, x):
        """Block forward substitution, i.e. a coarse sweep."""
        R, shape = self._blocks(x)
        Z = np.empty_like(R)
        Z[0] = R[0]
        for n in range(self.N):
            Z[n + 1] = self.G @ Z[n] + R[n + 1]
        return Z.reshape(shape)

    def apply_Mg_inverse_T(self, x):
        R, shape = self._blocks(x)
        Z = np.empty_like(R)
        Z[-1] = R[-1]
        for n in range(self.N - 1, -1, -1):
            Z[n] = self._GT @ Z[n + 1] + R[n]
        return Z.reshape(shape)

    def apply_E(self, x):
        x = np.asarray(x, dtype=float)
        return x - self.apply_Mg_inverse(self.apply_Mf(x))

    def apply_E_T(self, x):
        x = np.asarray(x, dtype=float)
        return x - self.apply_Mf_T(self.apply_Mg_inverse_T(x))

    def to_dense(self) -> np.ndarray:
        """Explicit ``E``; only sensible for small ``(N + 1) * d``."""
        eye = np.eye(self.dim)
        return np.column_stack([self.apply_E(eye[j]) for j in range(self.dim)])


@dataclass
class NilpotencyReport:
    passed: bool
    # ||E^k x|| / ||x|| for k = 0..N+1, one row per random sample
    decay: np.ndarray
    max_residual_full: float
    max_residual_zero_start: float
    tol: float


def check_nilpotent(op: IterationOperator, samples: int = 10, tol: float = 1e-10, seed: int = 0) -> NilpotencyReport:
    """Check ``E^(N+1) x = 0`` for random ``x`` and ``E^N x = 0`` when ``x_0 = 0``."""
    rng = np.random.default_rng(seed)
    decay = np.empty((samples, op.N + 2))
    worst_full = 0.0
    worst_zero = 0.0
    for s in range(samples):
        x = rng.standard_normal(op.dim)
        nx = np.linalg.norm(x)
        v = x
        decay[s, 0] = 1.0
        for k in range(1, op.N + 2):
            v = op.apply_E(v)
            decay[s, k] = np.linalg.norm(v) / nx
        worst_full = max(worst_full, decay[s, -1])

        x0 = rng.standard_normal(op.dim).reshape(op.N + 1, op.d)
        x0[0] = 0.0
        v = x0.ravel()
        for _ in range(op.N):
            v = op.apply_E(v)
        worst_zero = max(worst_zero, np.linalg.norm(v) / np.linalg.norm(x0))
    return NilpotencyReport(
        passed=bool(worst_full <= tol and worst_zero <= tol),
        decay=decay,
        max_residual_full=float(worst_full),
        max_residual_zero_start=float(worst_zero),
        tol=tol,
    )


def estimate_sigma_max(op: IterationOperator, tol: float = 1e-8, max_iter: int = 20_000) -> SingularValueEstimate:
    return max_singular_value(op.apply_E, op.apply_E_T, op.dim, tol=tol, max_iter=max_iter)


def convergence_bound(sigma_max: float, d0: float, k):
    """``d0 * sigma_max**k``, elementwise in ``k``."""
    if sigma_max < 0 or d0 < 0:
        raise ValueError("sigma_max and d0 must be nonnegative")
    return d0 * np.power(sigma_max, k) if np.ndim(k) else d0 * sigma_max**k
