"""Structured triangulations of the unit square."""
from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .errors import ConfigurationError


class Tag(str, enum.Enum):
    ROBIN = "robin"
    DIRICHLET = "dirichlet"


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Conforming P1 triangulation with tagged boundary edges.

    Vertices are numbered row-major (by y, then x): vertex (i, j) of the
    grid has index ``j * (m + 1) + i``.  Triangles are counter-clockwise.
    """

    vertices: np.ndarray  # (nv, 2)
    triangles: np.ndarray  # (nt, 3)
    boundary_edges: np.ndarray  # (ne, 2)
    boundary_tags: tuple[Tag, ...]
    cells_per_side: int

    @property
    def h(self) -> float:
        return 1.0 / self.cells_per_side

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def signed_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def barycentres(self) -> np.ndarray:
        return self.vertices[self.triangles].mean(axis=1)

    @cached_property
    def incidence(self) -> sp.csr_matrix:
        """Element-to-vertex incidence matrix, shape (nt, nv), 0/1 entries."""
        nt = self.n_triangles
        rows = np.repeat(np.arange(nt), 3)
        return sp.csr_matrix(
            (np.ones(3 * nt, dtype=np.int8), (rows, self.triangles.ravel())),
            shape=(nt, self.n_vertices),
        )

    @cached_property
    def boundary_vertex_mask(self) -> np.ndarray:
        mask = np.zeros(self.n_vertices, dtype=bool)
        mask[self.boundary_edges.ravel()] = True
        return mask

    def edges_with_tag(self, tag: Tag) -> np.ndarray:
        sel = [i for i, t in enumerate(self.boundary_tags) if t == tag]
        return self.boundary_edges[sel].reshape(-1, 2)

    def dump(self, path) -> None:
        """Write a plain-text vertex/triangle/boundary listing (debug aid)."""
        with open(path, "w") as fh:
            fh.write(f"# cells_per_side {self.cells_per_side}\n")
            fh.write(f"vertices {self.n_vertices}\n")
            for x, y in self.vertices:
                fh.write(f"{x:.17g} {y:.17g}\n")
            fh.write(f"triangles {self.n_triangles}\n")
            for a, b, c in self.triangles:
                fh.write(f"{a} {b} {c}\n")
            fh.write(f"boundary_edges {len(self.boundary_edges)}\n")
            for (a, b), t in zip(self.boundary_edges, self.boundary_tags):
                fh.write(f"{a} {b} {t.value}\n")


def element_edges(triangles: np.ndarray) -> np.ndarray:
    """All element edges as sorted vertex pairs, shape (3 * nt, 2)."""
    e = np.concatenate([triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]])
    return np.sort(e, axis=1)


def build_square_mesh(m: int, boundary_tag: Tag | str = Tag.ROBIN) -> TriMesh:
    """Triangulate the unit square with an m x m grid and alternating diagonals.

    Cell (i, j) is cut along its lower-left/upper-right diagonal when
    ``i + j`` is even and along the other diagonal otherwise.
    """
    if not isinstance(m, (int, np.integer)) or m < 1:
        raise ConfigurationError(f"cells per side must be a positive integer, got {m!r}")
    m = int(m)
    tag = Tag(boundary_tag)

    t = np.linspace(0.0, 1.0, m + 1)
    xx, yy = np.meshgrid(t, t)  # row-major by y
    vertices = np.column_stack([xx.ravel(), yy.ravel()])

    def vid(i, j):
        return j * (m + 1) + i

    ii, jj = np.meshgrid(np.arange(m), np.arange(m), indexing="xy")
    ii, jj = ii.ravel(), jj.ravel()  # cells ordered row-major by y
    v00, v10, v01, v11 = vid(ii, jj), vid(ii + 1, jj), vid(ii, jj + 1), vid(ii + 1, jj + 1)
    even = (ii + jj) % 2 == 0
    t1 = np.where(even[:, None], np.column_stack([v00, v10, v11]), np.column_stack([v00, v10, v01]))
    t2 = np.where(even[:, None], np.column_stack([v00, v11, v01]), np.column_stack([v10, v11, v01]))
    triangles = np.empty((2 * m * m, 3), dtype=np.int64)
    triangles[0::2] = t1
    triangles[1::2] = t2

    k = np.arange(m)
    bottom = np.column_stack([vid(k, 0), vid(k + 1, 0)])
    right = np.column_stack([vid(m, k), vid(m, k + 1)])
    top = np.column_stack([vid(m - k, m), vid(m - k - 1, m)])
    left = np.column_stack([vid(0, m - k), vid(0, m - k - 1)])
    boundary_edges = np.concatenate([bottom, right, top, left]).astype(np.int64)

    return TriMesh(
        vertices=vertices,
        triangles=triangles,
        boundary_edges=boundary_edges,
        boundary_tags=(tag,) * len(boundary_edges),
        cells_per_side=m,
    )


def with_tags(mesh: TriMesh, tags) -> TriMesh:
    """Copy of ``mesh`` with new per-edge boundary tags."""
    tags = tuple(Tag(t) for t in tags)
    if len(tags) != len(mesh.boundary_edges):
        raise ConfigurationError("one tag per boundary edge required")
    return TriMesh(mesh.vertices, mesh.triangles, mesh.boundary_edges, tags, mesh.cells_per_side)
