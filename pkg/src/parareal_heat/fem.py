"""P1 finite elements for ``u_t = nu(t) div(a(x, y) grad u)`` with zero Dirichlet data."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AssemblyError
from .mesh import Mesh, StripGeometry
from .sparse import SparseMatrix

__all__ = [
    "StripCoefficients",
    "InitialCondition",
    "DiscreteSystem",
    "element_mass",
    "element_stiffness",
    "assemble",
    "project_initial_condition",
    "coefficient_at",
]

MIN_AREA = 1e-14


@dataclass(frozen=True)
class StripCoefficients:
    a1: float
    a2: float
    a3: float

    def __post_init__(self):
        for name in ("a1", "a2", "a3"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")

    @classmethod
    def from_jump(cls, jump: float, base: float = 0.01) -> "StripCoefficients":
        """``a1 = a3 = base`` and ``a2 = jump * base``."""
        return cls(base, jump * base, base)

    @property
    def jump(self) -> float:
        return self.a2 / self.a1

    def as_array(self) -> np.ndarray:
        return np.array([self.a1, self.a2, self.a3])


@dataclass(frozen=True)
class InitialCondition:
    """Gaussian bump ``exp(-|p - center|^2 / sigma^2)``."""

    sigma: float = 0.35
    center: tuple[float, float] = (0.5, 0.5)

    def __post_init__(self):
        if not self.sigma > 0.0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")

    def __call__(self, x, y):
        cx, cy = self.center
        return np.exp(-((np.asarray(x) - cx) ** 2 + (np.asarray(y) - cy) ** 2) / self.sigma**2)


@dataclass(frozen=True, eq=False)
class DiscreteSystem:
    """Semidiscrete system ``M y' = -nu(t) K y`` on the interior dofs.

    ``mass_full``/``stiffness_full`` keep the unreduced matrices (all mesh
    nodes); ``free_dofs[i]`` is the mesh node carrying unknown ``i``.
    """

    mass: SparseMatrix
    stiffness: SparseMatrix
    free_dofs: np.ndarray
    mass_full: SparseMatrix | None = None
    stiffness_full: SparseMatrix | None = None

    @property
    def d(self) -> int:
        return self.mass.dim

    @classmethod
    def from_matrices(cls, mass, stiffness) -> "DiscreteSystem":
        """Wrap explicit matrices (dense arrays, scalars or :class:`SparseMatrix`)."""
        M = mass if isinstance(mass, SparseMatrix) else SparseMatrix.from_dense(mass)
        K = stiffness if isinstance(stiffness, SparseMatrix) else SparseMatrix.from_dense(stiffness)
        if M.dim != K.dim:
            raise ValueError(f"mass ({M.dim}) and stiffness ({K.dim}) dimensions differ")
        return cls(M, K, np.arange(M.dim), M, K)


def element_mass(area: float) -> np.ndarray:
    return area / 12.0 * (np.ones((3, 3)) + np.eye(3))


def _gradients(p: np.ndarray):
    """Barycentric gradients and areas for a stack of triangles ``(m, 3, 2)``."""
    x, y = p[..., 0], p[..., 1]
    area2 = (x[:, 1] - x[:, 0]) * (y[:, 2] - y[:, 0]) - (x[:, 2] - x[:, 0]) * (y[:, 1] - y[:, 0])
    # grad(lambda_i) = (y_j - y_k, x_k - x_j) / (2A) for (i, j, k) cyclic
    gx = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1)
    gy = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        grads = np.stack([gx, gy], axis=2) / area2[:, None, None]
    return grads, 0.5 * area2


def element_stiffness(vertices, a: float = 1.0) -> np.ndarray:
    """``a * int grad(phi_i) . grad(phi_j)`` on one triangle."""
    grads, area = _gradients(np.asarray(vertices, dtype=float)[None])
    return a * area[0] * grads[0] @ grads[0].T


def assemble(mesh: Mesh, coeffs: StripCoefficients) -> DiscreteSystem:
    """Consistent mass and strip-weighted stiffness, boundary rows/columns removed."""
    p = mesh.nodes[mesh.triangles]
    grads, area = _gradients(p)
    bad = np.flatnonzero(area < MIN_AREA)
    if bad.size:
        raise AssemblyError(f"{bad.size} degenerate or inverted elements (first: #{bad[0]}, area {area[bad[0]]:.3e})")
    a = coeffs.as_array()[mesh.strip.astype(np.int64) - 1]

    local_m = area[:, None, None] / 12.0 * (np.ones((3, 3)) + np.eye(3))
    local_k = (a * area)[:, None, None] * np.einsum("eik,ejk->eij", grads, grads)

    rows = np.repeat(mesh.triangles, 3, axis=1).ravel()
    cols = np.tile(mesh.triangles, (1, 3)).ravel()
    n = mesh.n_nodes
    M_full = SparseMatrix.from_triplets(rows, cols, local_m.ravel(), n)
    K_full = SparseMatrix.from_triplets(rows, cols, local_k.ravel(), n)
    # K's pattern must match M's for the cheap linear combinations in the steppers
    K_full = SparseMatrix(M_full.indptr, M_full.indices, _on_pattern(M_full, K_full), M_full.shape)

    free = np.flatnonzero(~mesh.boundary)
    return DiscreteSystem(M_full.submatrix(free), K_full.submatrix(free), free, M_full, K_full)


def _on_pattern(P: SparseMatrix, A: SparseMatrix) -> np.ndarray:
    """Values of ``A`` read off at the sparsity pattern of ``P`` (zeros where absent)."""
    return np.asarray(A.to_scipy()[np.repeat(np.arange(P.dim), np.diff(P.indptr)), P.indices]).ravel()


def project_initial_condition(mesh: Mesh, ic: InitialCondition, sys: DiscreteSystem) -> np.ndarray:
    """Nodal interpolant of ``ic`` at the free dofs."""
    pts = mesh.nodes[sys.free_dofs]
    return ic(pts[:, 0], pts[:, 1])


def coefficient_at(geom: StripGeometry, coeffs: StripCoefficients, p) -> float:
    x = p[0]
    if x < geom.x0:
        return coeffs.a1
    if x < geom.x1:
        return coeffs.a2
    return coeffs.a3
