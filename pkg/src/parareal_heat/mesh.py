"""Strip-aligned triangulations of the unit square."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import GeometryError

__all__ = [
    "StripGeometry",
    "Mesh",
    "build_strip_mesh",
    "refine_uniform",
    "mesh_width_stats",
    "write_mesh",
    "read_mesh",
]


@dataclass(frozen=True)
class StripGeometry:
    """Three vertical strips ``[0, x0)``, ``[x0, x0 + w)``, ``[x0 + w, 1]``.

    ``x0`` defaults to ``(1 - w) / 2``, centring the middle strip.
    """

    w: float
    x0: float | None = None

    def __post_init__(self):
        if self.x0 is None:
            object.__setattr__(self, "x0", (1.0 - self.w) / 2.0)
        if not self.w > 0.0:
            raise GeometryError(f"strip width must be positive, got w={self.w}")
        if not self.x0 > 0.0:
            raise GeometryError(f"strip must start inside the square, got x0={self.x0}")
        if not self.x0 + self.w < 1.0:
            raise GeometryError(f"strip must end inside the square, got x0+w={self.x0 + self.w}")

    @property
    def x1(self) -> float:
        return self.x0 + self.w

    def strip_of(self, x):
        """Strip index 1, 2 or 3 for abscissa ``x`` (scalar or array)."""
        x = np.asarray(x)
        out = np.where(x < self.x0, 1, np.where(x < self.x1, 2, 3))
        return int(out) if out.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class Mesh:
    """Conforming triangle mesh.

    ``nodes`` is ``(n, 2)``, ``triangles`` is ``(m, 3)`` counterclockwise,
    ``boundary`` flags nodes on the square's boundary and ``strip`` holds
    the strip index (1..3) of each triangle.
    """

    nodes: np.ndarray
    triangles: np.ndarray
    boundary: np.ndarray
    strip: np.ndarray
    geometry: StripGeometry | None = None

    def __post_init__(self):
        for name in ("nodes", "triangles", "boundary", "strip"):
            getattr(self, name).setflags(write=False)

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    def signed_areas(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    def centroids(self) -> np.ndarray:
        return self.nodes[self.triangles].mean(axis=1)


def _cells(length: float, h: float) -> int:
    # guard against 0.6/0.2 = 2.9999999999999996 style round-off
    return max(1, math.ceil(length / h - 1e-9))


def _boundary_flags(nodes: np.ndarray) -> np.ndarray:
    x, y = nodes[:, 0], nodes[:, 1]
    return (x == 0.0) | (x == 1.0) | (y == 0.0) | (y == 1.0)


def build_strip_mesh(geom: StripGeometry, target_h: float) -> Mesh:
    """Structured mesh whose vertical grid lines include ``x0`` and ``x0 + w``.

    Each of the three x-segments and the y-axis is cut into
    ``ceil(length / target_h)`` equal cells; every rectangle is split along
    its lower-left to upper-right diagonal.
    """
    if not target_h > 0.0:
        raise ValueError(f"target_h must be positive, got {target_h}")
    bounds = (0.0, geom.x0, geom.x1, 1.0)
    xs = [np.array([0.0])]
    seg_cells = []
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        n = _cells(hi - lo, target_h)
        seg_cells.append(n)
        pts = lo + (hi - lo) * np.arange(1, n + 1) / n
        pts[-1] = hi
        xs.append(pts)
    x = np.concatenate(xs)
    ny = _cells(1.0, target_h)
    y = np.arange(ny + 1) / ny
    nx = x.shape[0] - 1

    X, Y = np.meshgrid(x, y, indexing="xy")
    nodes = np.column_stack([X.ravel(), Y.ravel()])

    i, j = np.meshgrid(np.arange(nx), np.arange(ny), indexing="xy")
    i, j = i.ravel(), j.ravel()
    ll = j * (nx + 1) + i
    lr = ll + 1
    ul = ll + nx + 1
    ur = ul + 1
    lower = np.column_stack([ll, lr, ur])
    upper = np.column_stack([ll, ur, ul])
    triangles = np.empty((2 * ll.shape[0], 3), dtype=np.int64)
    triangles[0::2] = lower
    triangles[1::2] = upper

    cell_strip = np.repeat(np.arange(1, 4), seg_cells)
    strip = np.repeat(cell_strip[i], 2).astype(np.int8)

    return Mesh(nodes, triangles, _boundary_flags(nodes), strip, geom)


def refine_uniform(mesh: Mesh) -> Mesh:
    """Split every triangle into four by joining its edge midpoints."""
    tri = mesh.triangles
    m = tri.shape[0]
    edges = np.concatenate([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]])
    edges.sort(axis=1)
    unique, inverse = np.unique(edges, axis=0, return_inverse=True)
    inverse = inverse.ravel()
    mid = 0.5 * (mesh.nodes[unique[:, 0]] + mesh.nodes[unique[:, 1]])
    n0 = mesh.n_nodes
    nodes = np.vstack([mesh.nodes, mid])
    m01 = n0 + inverse[:m]
    m12 = n0 + inverse[m : 2 * m]
    m20 = n0 + inverse[2 * m :]
    a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]
    children = np.stack(
        [
            np.column_stack([a, m01, m20]),
            np.column_stack([m01, b, m12]),
            np.column_stack([m20, m12, c]),
            np.column_stack([m01, m12, m20]),
        ],
        axis=1,
    ).reshape(-1, 3)
    strip = np.repeat(mesh.strip, 4)
    return Mesh(nodes, children, _boundary_flags(nodes), strip, mesh.geometry)


def element_sizes(mesh: Mesh) -> np.ndarray:
    """Longest edge of each triangle."""
    p = mesh.nodes[mesh.triangles]
    lengths = np.stack(
        [
            np.linalg.norm(p[:, 1] - p[:, 0], axis=1),
            np.linalg.norm(p[:, 2] - p[:, 1], axis=1),
            np.linalg.norm(p[:, 0] - p[:, 2], axis=1),
        ],
        axis=1,
    )
    return lengths.max(axis=1)


def mesh_width_stats(mesh: Mesh) -> tuple[float, float]:
    sizes = element_sizes(mesh)
    return float(sizes.min()), float(sizes.max())


def write_mesh(mesh: Mesh, path) -> None:
    """Plain-text dump: ``x y boundary`` per node, then ``i j k strip`` per triangle."""
    path = Path(path)
    with path.open("w", encoding="ascii") as fh:
        for (x, y), flag in zip(mesh.nodes, mesh.boundary):
            fh.write(f"{float(x)!r} {float(y)!r} {int(flag)}\n")
        for (i, j, k), s in zip(mesh.triangles, mesh.strip):
            fh.write(f"{i} {j} {k} {s}\n")


def read_mesh(path) -> Mesh:
    """Inverse of :func:`write_mesh`; node and triangle lines differ in field count."""
    rows = [ln.split() for ln in Path(path).read_text(encoding="ascii").splitlines() if ln.strip()]
    node_rows = np.array([r for r in rows if len(r) == 3], dtype=float).reshape(-1, 3)
    tri_rows = np.array([r for r in rows if len(r) == 4], dtype=np.int64).reshape(-1, 4)
    return Mesh(
        node_rows[:, :2].copy(),
        tri_rows[:, :3].copy(),
        node_rows[:, 2].astype(bool),
        tri_rows[:, 3].astype(np.int8),
    )
