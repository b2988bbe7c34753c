"""P1 Lagrange assembly of Helmholtz-type forms on a mesh or element subset.

All matrices are returned over the *local* numbering of the element subset:
local index ``i`` corresponds to global vertex ``element_dofs(mesh, elements)[i]``.
Coefficients are sampled once per triangle at its barycentre.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .errors import AssemblyError
from .mesh import Tag, TriMesh, element_edges


class Form(str, enum.Enum):
    HELMHOLTZ = "helmholtz"
    POSITIVE_HELMHOLTZ = "positive_helmholtz"
    LAPLACE = "laplace"


def _one(x, y):
    return np.ones_like(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class CoefficientField:
    """Stiffness ``a`` and squared slowness ``m_coef``, both vectorised callables of (x, y)."""

    a: Callable = _one
    m_coef: Callable = _one

    def sample(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        x, y = points[:, 0], points[:, 1]
        a = np.broadcast_to(np.asarray(self.a(x, y), dtype=float), x.shape).copy()
        m = np.broadcast_to(np.asarray(self.m_coef(x, y), dtype=float), x.shape).copy()
        if np.any(a <= 0) or np.any(m <= 0):
            raise AssemblyError("coefficients a and m must be strictly positive")
        return a, m


def gaussian_source(x, y):
    """Smoothed point source centred at (1/2, 1/2)."""
    return 1.0e4 * np.exp(-1.0e3 * ((np.asarray(x) - 0.5) ** 2 + (np.asarray(y) - 0.5) ** 2))


def zero_source(x, y):
    return np.zeros_like(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class ProblemSpec:
    omega: float
    coeffs: CoefficientField = CoefficientField()
    impedance: Callable | None = None  # None -> sqrt(a * m)
    source: Callable = gaussian_source
    dirichlet_value: complex | Callable = 0.0

    def __post_init__(self):
        if not self.omega > 0:
            raise AssemblyError(f"omega must be positive, got {self.omega}")

    def impedance_at(self, points: np.ndarray) -> np.ndarray:
        if self.impedance is None:
            a, m = self.coeffs.sample(points)
            return np.sqrt(a * m)
        return np.broadcast_to(
            np.asarray(self.impedance(points[:, 0], points[:, 1]), dtype=float), (len(points),)
        )

    def wavenumber_at(self, points: np.ndarray) -> np.ndarray:
        a, m = self.coeffs.sample(points)
        return self.omega * np.sqrt(m / a)

    def dirichlet_data(self, points: np.ndarray) -> np.ndarray:
        if callable(self.dirichlet_value):
            return np.asarray(self.dirichlet_value(points[:, 0], points[:, 1]), dtype=complex)
        return np.full(len(points), complex(self.dirichlet_value))


# -- element kernels -----------------------------------------------------------


def p1_gradients(mesh: TriMesh, elements: np.ndarray):
    """Barycentric-coordinate gradients (ne, 3, 2) and areas (ne,)."""
    p = mesh.vertices[mesh.triangles[elements]]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    area = 0.5 * det
    # rotate opposite edges by -90 degrees; grad(lambda_i) = rot(e_i) / (2 area)
    e0 = p[:, 2] - p[:, 1]
    e1 = p[:, 0] - p[:, 2]
    e2 = p[:, 1] - p[:, 0]
    edges = np.stack([e0, e1, e2], axis=1)
    grads = np.stack([edges[..., 1], -edges[..., 0]], axis=-1) / det[:, None, None]
    return grads, area


_MASS = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0
_EDGE_MASS = np.array([[2.0, 1.0], [1.0, 2.0]]) / 6.0


def element_stiffness(mesh: TriMesh, elements: np.ndarray, a: np.ndarray) -> np.ndarray:
    grads, area = p1_gradients(mesh, elements)
    return (a * area)[:, None, None] * np.einsum("eik,ejk->eij", grads, grads)


def element_mass(mesh: TriMesh, elements: np.ndarray, m: np.ndarray) -> np.ndarray:
    _, area = p1_gradients(mesh, elements)
    return (m * area)[:, None, None] * _MASS


def element_dofs(mesh: TriMesh, elements=None) -> np.ndarray:
    """Sorted global vertex indices touched by ``elements`` (all if None)."""
    if elements is None:
        return np.arange(mesh.n_vertices)
    return np.unique(mesh.triangles[np.asarray(elements)])


def _local_index(dofs: np.ndarray, n: int) -> np.ndarray:
    g2l = np.full(n, -1, dtype=np.int64)
    g2l[dofs] = np.arange(len(dofs))
    return g2l


def _scatter(rows, cols, vals, n, dtype) -> sp.csr_matrix:
    mat = sp.coo_matrix((vals.astype(dtype).ravel(), (rows.ravel(), cols.ravel())), shape=(n, n))
    mat = mat.tocsr()
    mat.sum_duplicates()
    return mat


def subset_boundary_edges(mesh: TriMesh, elements) -> tuple[np.ndarray, np.ndarray]:
    """Edges of the boundary of the element subset with their owning element.

    Returns ``(edges, owners)``; edges are sorted vertex pairs in a
    deterministic (lexicographic) order.
    """
    elements = np.asarray(elements)
    e = element_edges(mesh.triangles[elements])
    owner = np.tile(elements, 3)
    nv = mesh.n_vertices
    key = e[:, 0] * nv + e[:, 1]
    _, idx, counts = np.unique(key, return_index=True, return_counts=True)
    single = counts == 1
    return e[idx[single]], owner[idx[single]]


def edge_mass(mesh: TriMesh, edges: np.ndarray, weights=None) -> np.ndarray:
    """Per-edge 2x2 mass blocks scaled by ``weights`` (default 1)."""
    p = mesh.vertices[edges]
    length = np.linalg.norm(p[:, 1] - p[:, 0], axis=1)
    w = np.ones(len(edges)) if weights is None else np.asarray(weights)
    return (w * length)[:, None, None] * _EDGE_MASS


def _robin_blocks(mesh, spec, edges, owners):
    z = spec.impedance_at(mesh.barycentres()[owners])
    return 1j * spec.omega * edge_mass(mesh, edges, z)


def eliminate_dirichlet(A: sp.spmatrix, nodes, b=None, values=None):
    """Symmetric elimination: zero rows/cols of ``nodes``, unit diagonal.

    If ``b`` is given, it is lifted with ``values`` and the pair
    ``(A, b)`` is returned; otherwise only the matrix.
    """
    nodes = np.asarray(nodes, dtype=np.int64)
    n = A.shape[0]
    A = sp.csr_matrix(A)
    if b is not None:
        b = np.array(b, dtype=np.result_type(A.dtype, complex))
        g = np.zeros(n, dtype=b.dtype)
        if values is not None:
            g[nodes] = values
        b = b - A @ g
        b[nodes] = g[nodes]
    keep = np.ones(n)
    keep[nodes] = 0.0
    K = sp.diags(keep)
    A = (K @ A @ K).tocsr()
    ident = np.zeros(n)
    ident[nodes] = 1.0
    A = (A + sp.diags(ident)).tocsr()
    A.sum_duplicates()
    if b is not None:
        return A, b
    return A


def assemble_form(
    mesh: TriMesh,
    spec: ProblemSpec,
    form: Form | str = Form.HELMHOLTZ,
    elements=None,
    robin_edges=None,
    dirichlet_nodes=None,
) -> sp.csr_matrix:
    """Assemble a P1 sesquilinear form over an element subset.

    Parameters
    ----------
    elements : array of triangle indices, or None for the whole mesh.
    robin_edges : (k, 2) vertex pairs receiving ``i omega Z`` edge mass
        (HELMHOLTZ only).  Each must lie on the boundary of the subset.
    dirichlet_nodes : global vertex indices eliminated symmetrically.

    Returns
    -------
    CSR matrix over ``element_dofs(mesh, elements)``; complex for
    HELMHOLTZ, real otherwise.
    """
    form = Form(form)
    if elements is None:
        elements = np.arange(mesh.n_triangles)
    elements = np.asarray(elements, dtype=np.int64)
    if elements.size == 0:
        raise AssemblyError("cannot assemble over an empty element set")
    dofs = element_dofs(mesh, elements)
    g2l = _local_index(dofs, mesh.n_vertices)
    n = len(dofs)

    a, m = spec.coeffs.sample(mesh.barycentres()[elements])
    ke = element_stiffness(mesh, elements, a)
    if form is Form.HELMHOLTZ:
        ke = ke - spec.omega**2 * element_mass(mesh, elements, m)
    elif form is Form.POSITIVE_HELMHOLTZ:
        ke = ke + spec.omega**2 * element_mass(mesh, elements, m)

    loc = g2l[mesh.triangles[elements]]
    rows = np.repeat(loc[:, :, None], 3, axis=2)
    cols = np.repeat(loc[:, None, :], 3, axis=1)
    dtype = complex if form is Form.HELMHOLTZ else float
    R, C, V = [rows.ravel()], [cols.ravel()], [ke.ravel().astype(dtype)]

    if form is Form.HELMHOLTZ and robin_edges is not None and len(robin_edges):
        edges = np.sort(np.asarray(robin_edges, dtype=np.int64).reshape(-1, 2), axis=1)
        bnd, owners = subset_boundary_edges(mesh, elements)
        nv = mesh.n_vertices
        lookup = dict(zip((bnd[:, 0] * nv + bnd[:, 1]).tolist(), owners.tolist()))
        try:
            own = np.array([lookup[k] for k in (edges[:, 0] * nv + edges[:, 1]).tolist()])
        except KeyError as exc:
            raise AssemblyError(f"Robin edge {exc} is not on the boundary of the element subset") from None
        blocks = _robin_blocks(mesh, spec, edges, own)
        le = g2l[edges]
        R.append(np.repeat(le[:, :, None], 2, axis=2).ravel())
        C.append(np.repeat(le[:, None, :], 2, axis=1).ravel())
        V.append(blocks.ravel())

    A = _scatter(np.concatenate(R), np.concatenate(C), np.concatenate(V), n, dtype)
    if dirichlet_nodes is not None and len(dirichlet_nodes):
        local = g2l[np.asarray(dirichlet_nodes, dtype=np.int64)]
        A = eliminate_dirichlet(A, local[local >= 0])
    return A


def assemble_rhs(mesh: TriMesh, spec: ProblemSpec) -> np.ndarray:
    """Load vector ``F(v) = int f conj(v)`` with the 3-point edge-midpoint rule."""
    tri = mesh.triangles
    p = mesh.vertices[tri]
    area = mesh.signed_areas()
    # midpoint k sits on the edge opposite vertex k
    mids = np.stack([(p[:, 1] + p[:, 2]) / 2, (p[:, 2] + p[:, 0]) / 2, (p[:, 0] + p[:, 1]) / 2], axis=1)
    fm = np.asarray(spec.source(mids[..., 0], mids[..., 1]), dtype=complex)
    fm = np.broadcast_to(fm, mids.shape[:2])
    # phi_i is 1/2 at the two midpoints adjacent to vertex i and 0 at the opposite one
    contrib = (area / 6.0)[:, None] * (fm.sum(axis=1, keepdims=True) - fm)
    b = np.zeros(mesh.n_vertices, dtype=complex)
    np.add.at(b, tri.ravel(), contrib.ravel())
    return b


def assemble_boundary_mass(mesh: TriMesh, edges) -> tuple[sp.csr_matrix, np.ndarray]:
    """1D mass matrix over an edge set.

    Returns ``(M, nodes)`` where ``nodes`` are the sorted global vertices
    touched by ``edges`` and ``M`` is indexed by them.
    """
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if len(edges) == 0:
        raise AssemblyError("boundary mass matrix requested on an empty edge set")
    nodes = np.unique(edges)
    g2l = _local_index(nodes, mesh.n_vertices)
    le = g2l[edges]
    blocks = edge_mass(mesh, edges)
    rows = np.repeat(le[:, :, None], 2, axis=2)
    cols = np.repeat(le[:, None, :], 2, axis=1)
    return _scatter(rows, cols, blocks, len(nodes), float), nodes


def global_system(mesh: TriMesh, spec: ProblemSpec):
    """Global Helmholtz matrix and load vector with the mesh's boundary tags applied."""
    robin = mesh.edges_with_tag(Tag.ROBIN)
    dnodes = np.unique(mesh.edges_with_tag(Tag.DIRICHLET))
    A = assemble_form(mesh, spec, Form.HELMHOLTZ, robin_edges=robin)
    b = assemble_rhs(mesh, spec)
    if len(dnodes):
        A, b = eliminate_dirichlet(A, dnodes, b, spec.dirichlet_data(mesh.vertices[dnodes]))
    return A, b
