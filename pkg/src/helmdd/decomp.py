"""Overlapping decompositions of a triangulation and their local operators."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from .errors import ConfigurationError, SingularMatrixError
from .fem import Form, ProblemSpec, assemble_form, element_dofs, subset_boundary_edges
from .linalg import Factorization, lu_factor
from .mesh import Tag, TriMesh


class PouVariant(str, enum.Enum):
    STEEP = "steep"
    LINEAR = "linear"
    VANISHING = "vanishing"


@dataclass
class Subdomain:
    """One overlapping subdomain.  All dof arrays hold sorted global vertex ids."""

    id: int
    core_elements: np.ndarray
    elements: np.ndarray
    dofs: np.ndarray
    interface_dofs: np.ndarray
    interior_dofs: np.ndarray
    boundary_dofs: np.ndarray  # every dof on the subdomain boundary (interface or physical)
    interface_edges: np.ndarray  # (k, 2) submesh boundary edges not on the physical boundary
    distance: np.ndarray  # element-layer distance from the interface, per local dof
    overlap_layers: int
    extended_elements: np.ndarray | None = None
    extended_dofs: np.ndarray | None = None
    pou_weights: np.ndarray | None = None

    @property
    def n_dofs(self) -> int:
        return len(self.dofs)

    def local(self, global_ids) -> np.ndarray:
        """Positions of ``global_ids`` inside ``dofs``."""
        return np.searchsorted(self.dofs, global_ids)

    @property
    def interface_local(self) -> np.ndarray:
        return self.local(self.interface_dofs)

    @property
    def interior_local(self) -> np.ndarray:
        return self.local(self.interior_dofs)

    @property
    def has_interface(self) -> bool:
        return len(self.interface_dofs) > 0

    @property
    def ext_dofs(self) -> np.ndarray:
        return self.dofs if self.extended_dofs is None else self.extended_dofs

    @property
    def ext_elements(self) -> np.ndarray:
        return self.elements if self.extended_elements is None else self.extended_elements


def _incidence(mesh: TriMesh) -> sp.csr_matrix:
    return mesh.incidence.astype(np.int32)


def grow_elements(mesh: TriMesh, mask: np.ndarray, layers: int) -> np.ndarray:
    """Add ``layers`` rounds of vertex-adjacent elements to an element mask."""
    E = _incidence(mesh)
    ET = E.T.tocsr()
    mask = mask.astype(np.int32)
    for _ in range(layers):
        nodes = (ET @ mask) > 0
        mask = ((E @ nodes.astype(np.int32)) > 0).astype(np.int32)
    return mask.astype(bool)


def partition_grid(mesh: TriMesh, px: int, py: int) -> np.ndarray:
    """Assign every element to block ``(floor(x px), floor(y py))`` of its barycentre.

    Returns the subdomain id per element, ``id = iy * px + ix``.
    """
    m = mesh.cells_per_side
    if px < 1 or py < 1:
        raise ConfigurationError(f"px and py must be >= 1, got {px}x{py}")
    if px > m or py > m:
        raise ConfigurationError(f"{px}x{py} partition exceeds {m} cells per side")
    c = mesh.barycentres()
    ix = np.clip(np.floor(c[:, 0] * px).astype(int), 0, px - 1)
    iy = np.clip(np.floor(c[:, 1] * py).astype(int), 0, py - 1)
    part = iy * px + ix
    counts = np.bincount(part, minlength=px * py)
    if np.any(counts == 0):
        raise ConfigurationError(f"empty subdomain(s) {np.flatnonzero(counts == 0).tolist()}")
    return part


def _boundary_keys(mesh: TriMesh) -> np.ndarray:
    e = np.sort(mesh.boundary_edges, axis=1)
    return np.sort(e[:, 0] * mesh.n_vertices + e[:, 1])


def _layer_distance(mesh: TriMesh, elements, dofs, sources) -> np.ndarray:
    """Element-layer graph distance from ``sources`` (global ids) within the element set."""
    n = len(dofs)
    dist = np.full(n, np.inf)
    if len(sources) == 0:
        return dist
    E = _incidence(mesh)[elements][:, dofs].tocsr()
    ET = E.T.tocsr()
    reached = np.zeros(n, dtype=bool)
    reached[np.searchsorted(dofs, sources)] = True
    dist[reached] = 0
    d = 0
    while not reached.all():
        d += 1
        elems = (E @ reached.astype(np.int32)) > 0
        new = ((ET @ elems.astype(np.int32)) > 0) & ~reached
        if not new.any():
            break
        dist[new] = d
        reached |= new
    return dist


def _make_subdomain(mesh, sid, core, elements, layers, bkeys, dirichlet) -> Subdomain:
    dofs = element_dofs(mesh, elements)
    edges, _ = subset_boundary_edges(mesh, elements)
    keys = edges[:, 0] * mesh.n_vertices + edges[:, 1]
    physical = np.isin(keys, bkeys)
    iface_edges = edges[~physical]
    interface = np.unique(iface_edges)
    boundary = np.unique(edges)
    interior = np.setdiff1d(dofs, np.union1d(interface, dirichlet))
    dist = _layer_distance(mesh, elements, dofs, interface)
    return Subdomain(
        id=sid,
        core_elements=core,
        elements=elements,
        dofs=dofs,
        interface_dofs=interface,
        interior_dofs=interior,
        boundary_dofs=boundary,
        interface_edges=iface_edges,
        distance=dist,
        overlap_layers=layers,
    )


def dirichlet_nodes(mesh: TriMesh) -> np.ndarray:
    return np.unique(mesh.edges_with_tag(Tag.DIRICHLET))


def add_overlap(mesh: TriMesh, core: np.ndarray, layers: int = 1) -> list[Subdomain]:
    """Grow each nonoverlapping block by ``layers`` rounds of vertex-adjacent elements."""
    if layers < 1:
        raise ConfigurationError(f"overlap layers must be >= 1, got {layers}")
    bkeys = _boundary_keys(mesh)
    dnodes = dirichlet_nodes(mesh)
    subs = []
    for sid in range(int(core.max()) + 1):
        core_mask = core == sid
        mask = grow_elements(mesh, core_mask, layers)
        subs.append(
            _make_subdomain(
                mesh, sid, np.flatnonzero(core_mask), np.flatnonzero(mask), layers, bkeys, dnodes
            )
        )
    return subs


def build_extended(mesh: TriMesh, subdomains: list[Subdomain], extra_layers: int = 1) -> list[Subdomain]:
    """Attach enlarged element/dof sets used only by the extended-harmonic coarse space."""
    if extra_layers < 1:
        raise ConfigurationError(f"extra layers must be >= 1, got {extra_layers}")
    out = []
    for s in subdomains:
        mask = np.zeros(mesh.n_triangles, dtype=bool)
        mask[s.elements] = True
        ext = np.flatnonzero(grow_elements(mesh, mask, extra_layers))
        out.append(replace(s, extended_elements=ext, extended_dofs=element_dofs(mesh, ext)))
    return out


def raw_pou(mesh: TriMesh, s: Subdomain, variant: PouVariant) -> np.ndarray:
    """Unnormalized weights chi_s per local dof."""
    variant = PouVariant(variant)
    chi = np.zeros(s.n_dofs)
    core_dofs = s.local(element_dofs(mesh, s.core_elements))
    r = s.distance
    l = s.overlap_layers
    if variant is PouVariant.STEEP:
        ext = np.minimum(r, 1.0)
    elif variant is PouVariant.LINEAR:
        ext = np.minimum(r, l) / l
    else:
        span = max(l - 1, 1)
        ext = np.minimum(np.maximum(r - 1, 0), span) / span
    chi[:] = ext
    chi[core_dofs] = 1.0
    return chi


def build_partition_of_unity(mesh: TriMesh, subdomains: list[Subdomain], variant=PouVariant.STEEP) -> list[Subdomain]:
    """Normalized partition-of-unity weights ``D_s = chi_s / sum_t chi_t``."""
    chis = [raw_pou(mesh, s, variant) for s in subdomains]
    total = np.zeros(mesh.n_vertices)
    for s, chi in zip(subdomains, chis):
        total[s.dofs] += chi
    if np.any(total <= 0):
        bad = np.flatnonzero(total <= 0)
        raise ConfigurationError(f"partition of unity vanishes at dofs {bad[:10].tolist()}")
    return [replace(s, pou_weights=chi / total[s.dofs]) for s, chi in zip(subdomains, chis)]


@dataclass
class Decomposition:
    mesh: TriMesh
    subdomains: list[Subdomain]
    px: int
    py: int
    overlap: int
    pou: PouVariant
    extra_layers: int = 0

    @property
    def N(self) -> int:
        return len(self.subdomains)

    def pou_operator(self) -> sp.csr_matrix:
        """``sum_s R_s^T D_s R_s`` as a sparse matrix (should be the identity)."""
        n = self.mesh.n_vertices
        out = sp.csr_matrix((n, n))
        for s in self.subdomains:
            out = out + sp.csr_matrix((s.pou_weights, (s.dofs, s.dofs)), shape=(n, n))
        return out


def decompose(
    mesh: TriMesh,
    px: int,
    py: int,
    overlap: int = 1,
    pou: PouVariant | str = PouVariant.STEEP,
    extra_layers: int = 0,
) -> Decomposition:
    core = partition_grid(mesh, px, py)
    subs = add_overlap(mesh, core, overlap)
    if extra_layers:
        subs = build_extended(mesh, subs, extra_layers)
    subs = build_partition_of_unity(mesh, subs, pou)
    return Decomposition(mesh, subs, px, py, overlap, PouVariant(pou), extra_layers)


# -- local matrices --------------------------------------------------------------


def restrict(M: sp.spmatrix, rows, cols=None) -> sp.csr_matrix:
    cols = rows if cols is None else cols
    return sp.csr_matrix(M)[rows][:, cols]


@dataclass
class GlobalOperators:
    A: sp.csr_matrix  # Helmholtz (with physical Robin / Dirichlet)
    B: sp.csr_matrix  # positive Helmholtz, no boundary term
    L: sp.csr_matrix  # Laplace with coefficient a, no boundary term


def global_operators(mesh: TriMesh, spec: ProblemSpec) -> GlobalOperators:
    dn = dirichlet_nodes(mesh)
    A = assemble_form(mesh, spec, Form.HELMHOLTZ, robin_edges=mesh.edges_with_tag(Tag.ROBIN), dirichlet_nodes=dn)
    B = assemble_form(mesh, spec, Form.POSITIVE_HELMHOLTZ, dirichlet_nodes=dn)
    L = assemble_form(mesh, spec, Form.LAPLACE, dirichlet_nodes=dn)
    return GlobalOperators(A, B, L)


@dataclass
class LocalMatrices:
    """Local operators of one subdomain; names follow Dirichlet (plain), Neumann (tilde), Robin (hat)."""

    A: sp.csr_matrix
    A_hat: sp.csr_matrix
    A_tilde: sp.csr_matrix
    B: sp.csr_matrix
    B_tilde: sp.csr_matrix
    L: sp.csr_matrix
    L_tilde: sp.csr_matrix
    A_check: sp.csr_matrix
    B_tilde_check: sp.csr_matrix
    A_hat_fact: Factorization = field(repr=False)


def _physical_robin_edges(mesh: TriMesh, s_elements) -> np.ndarray:
    robin = np.sort(mesh.edges_with_tag(Tag.ROBIN), axis=1)
    if len(robin) == 0:
        return robin
    edges, _ = subset_boundary_edges(mesh, s_elements)
    nv = mesh.n_vertices
    mine = np.isin(robin[:, 0] * nv + robin[:, 1], edges[:, 0] * nv + edges[:, 1])
    return robin[mine]


def assemble_local_matrices(
    mesh: TriMesh, s: Subdomain, spec: ProblemSpec, ops: GlobalOperators
) -> LocalMatrices:
    dn = dirichlet_nodes(mesh)
    dn_s = dn[np.isin(dn, s.dofs)]
    phys = _physical_robin_edges(mesh, s.elements)
    A_tilde = assemble_form(mesh, spec, Form.HELMHOLTZ, s.elements, robin_edges=phys, dirichlet_nodes=dn_s)
    robin_all = np.concatenate([phys, s.interface_edges]) if len(s.interface_edges) else phys
    A_hat = assemble_form(mesh, spec, Form.HELMHOLTZ, s.elements, robin_edges=robin_all, dirichlet_nodes=dn_s)
    B_tilde = assemble_form(mesh, spec, Form.POSITIVE_HELMHOLTZ, s.elements, dirichlet_nodes=dn_s)
    L_tilde = assemble_form(mesh, spec, Form.LAPLACE, s.elements, dirichlet_nodes=dn_s)
    ext_el, ext_dofs = s.ext_elements, s.ext_dofs
    if s.extended_elements is None:
        B_tilde_check = B_tilde
        A_check = restrict(ops.A, s.dofs)
    else:
        dn_e = dn[np.isin(dn, ext_dofs)]
        B_tilde_check = assemble_form(mesh, spec, Form.POSITIVE_HELMHOLTZ, ext_el, dirichlet_nodes=dn_e)
        A_check = restrict(ops.A, ext_dofs)
    try:
        fact = lu_factor(A_hat, context=f"subdomain {s.id}")
    except SingularMatrixError as exc:
        raise SingularMatrixError(f"local Robin matrix of subdomain {s.id} is singular: {exc}", exc.pivot) from None
    return LocalMatrices(
        A=restrict(ops.A, s.dofs),
        A_hat=A_hat,
        A_tilde=A_tilde,
        B=restrict(ops.B, s.dofs),
        B_tilde=B_tilde,
        L=restrict(ops.L, s.dofs),
        L_tilde=L_tilde,
        A_check=A_check,
        B_tilde_check=B_tilde_check,
        A_hat_fact=fact,
    )
