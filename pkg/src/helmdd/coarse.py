"""Spectral coarse spaces: DtN, Delta-GenEO, H_k-GenEO, harmonic and extended harmonic.

Each method first computes a per-subdomain :class:`LocalSpectrum` (all
candidate eigenvalues in ascending order of real part together with the
local, not yet weighted, eigenvectors).  Selection rules are then pure
filters over that sorted spectrum, which is what makes threshold sweeps
cheap and selections nested.
"""
from __future__ import annotations

import csv
import enum
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .decomp import Decomposition, LocalMatrices, Subdomain, dirichlet_nodes
from .errors import ConfigurationError, NumericalError, SingularMatrixError
from .fem import ProblemSpec, assemble_boundary_mass
from .linalg import Factorization, definite_pencil_smallest, lu_factor, normalize_phase, qz_eig
from .mesh import TriMesh

log = logging.getLogger(__name__)

REAL_TOL = 1e-6
RANK_TOL = 1e-10


def independent_columns(V: np.ndarray, tol: float = RANK_TOL) -> np.ndarray:
    """Indices of the columns of V kept by greedy Gram-Schmidt in column order.

    A column is kept when its component orthogonal to the previously kept
    ones exceeds ``tol`` times its norm.  The decision for column j depends
    only on columns 0..j, so prefixes of V give prefixes of the result.
    """
    keep = []
    Q = np.zeros((V.shape[0], 0), dtype=np.result_type(V.dtype, float))
    for j in range(V.shape[1]):
        v = V[:, j]
        nv = np.linalg.norm(v)
        if nv <= tol:
            continue
        w = v - Q @ (Q.conj().T @ v)
        w = w - Q @ (Q.conj().T @ w)
        nw = np.linalg.norm(w)
        if nw > tol * nv:
            keep.append(j)
            Q = np.column_stack([Q, w / nw])
    return np.array(keep, dtype=int)


class Method(str, enum.Enum):
    ONE_LEVEL = "one_level"
    DTN = "dtn"
    DELTA_GENEO = "delta_geneo"
    HK_GENEO = "hk_geneo"
    HARMONIC = "harmonic"
    EXTENDED = "extended"


# thresholds recommended for the square benchmarks
DEFAULT_TAU = {
    Method.DTN: 500.0,
    Method.DELTA_GENEO: 0.5,
    Method.HK_GENEO: 0.5,
    Method.HARMONIC: 10.0,
    Method.EXTENDED: 7.0,
}


class SelectionMode(str, enum.Enum):
    THRESHOLD = "threshold"
    FIXED_COUNT = "fixed_count"


@dataclass(frozen=True)
class SelectionRule:
    mode: SelectionMode = SelectionMode.THRESHOLD
    tau: float | None = None
    nev: int | None = None
    cap: int | None = None

    def __post_init__(self):
        mode = SelectionMode(self.mode)
        object.__setattr__(self, "mode", mode)
        if mode is SelectionMode.THRESHOLD and not (self.tau is not None and self.tau > 0):
            raise ConfigurationError(f"threshold selection needs tau > 0, got {self.tau}")
        if mode is SelectionMode.FIXED_COUNT and not (self.nev is not None and self.nev >= 0):
            raise ConfigurationError(f"fixed-count selection needs nev >= 0, got {self.nev}")
        if self.cap is not None and self.cap < 0:
            raise ConfigurationError("cap must be nonnegative")

    @classmethod
    def threshold(cls, tau: float, cap: int | None = None) -> "SelectionRule":
        return cls(SelectionMode.THRESHOLD, tau=tau, cap=cap)

    @classmethod
    def count(cls, nev: int, cap: int | None = None) -> "SelectionRule":
        return cls(SelectionMode.FIXED_COUNT, nev=nev, cap=cap)

    @property
    def value(self):
        return self.tau if self.mode is SelectionMode.THRESHOLD else self.nev

    def select(self, eigenvalues: np.ndarray) -> np.ndarray:
        """Indices retained from an ascending-real-part spectrum."""
        if self.mode is SelectionMode.THRESHOLD:
            # spectrum is sorted, so the retained set is a prefix
            above = ~(np.real(eigenvalues) < self.tau)
            k = int(np.argmax(above)) if above.any() else len(eigenvalues)
        else:
            k = min(self.nev, len(eigenvalues))
        if self.cap is not None:
            k = min(k, self.cap)
        return np.arange(k)


@dataclass
class CoarseColumns:
    """Coarse basis contribution of one subdomain: columns ``R_s^T D_s u``."""

    subdomain: int
    method: Method
    dofs: np.ndarray
    vectors: np.ndarray  # (n_s, k), already weighted by D_s
    eigenvalues: np.ndarray

    @property
    def count(self) -> int:
        return self.vectors.shape[1]


@dataclass
class LocalSpectrum:
    subdomain: int
    method: Method
    dofs: np.ndarray
    weights: np.ndarray
    eigenvalues: np.ndarray  # ascending real part
    vectors: np.ndarray  # (n_s, k) unweighted local vectors, same order
    check_real: bool = False

    def selected(self, rule: SelectionRule) -> np.ndarray:
        idx = rule.select(self.eigenvalues)
        if self.check_real and idx.size:
            lam = self.eigenvalues[idx]
            bad = np.abs(lam.imag) > REAL_TOL * (1 + np.abs(lam.real))
            if bad.any():
                raise NumericalError(
                    f"subdomain {self.subdomain}: {self.method.value} eigenvalue {lam[bad][0]} "
                    "is not real within tolerance"
                )
        return idx

    def columns(self, rule: SelectionRule) -> CoarseColumns:
        idx = self.selected(rule)
        vecs = self.weights[:, None] * self.vectors[:, idx]
        keep = independent_columns(vecs)
        if len(keep) < vecs.shape[1]:
            # modes that differ only where D_s vanishes collapse after weighting
            log.info("subdomain %d: dropping %d dependent coarse vectors", self.subdomain, vecs.shape[1] - len(keep))
        return CoarseColumns(self.subdomain, self.method, self.dofs, vecs[:, keep], self.eigenvalues[idx][keep])

    def rows(self, rule: SelectionRule):
        """CSV rows ``(subdomain, index, re, im, retained)``."""
        k = len(self.selected(rule))
        for i, lam in enumerate(self.eigenvalues):
            yield self.subdomain, i, float(np.real(lam)), float(np.imag(lam)), int(i < k)


def _empty(method, s: Subdomain) -> LocalSpectrum:
    log.warning("subdomain %d has no interface; %s contributes no coarse vectors", s.id, method.value)
    return LocalSpectrum(s.id, method, s.dofs, s.pou_weights, np.zeros(0, complex), np.zeros((s.n_dofs, 0), complex))


def _from_pairs(s, method, pairs, lift=lambda v: v, check_real=False) -> LocalSpectrum:
    pairs = [p for p in pairs if p.finite]
    lam = np.array([p.eigenvalue for p in pairs], dtype=complex)
    if pairs:
        vecs = np.column_stack([normalize_phase(lift(p.eigenvector)) for p in pairs])
    else:
        vecs = np.zeros((s.n_dofs, 0), complex)
    return LocalSpectrum(s.id, method, s.dofs, s.pou_weights, lam, vecs, check_real)


def _weight(s: Subdomain, M) -> np.ndarray:
    D = s.pou_weights
    M = M.toarray() if sp.issparse(M) else np.asarray(M)
    return D[:, None] * M * D[None, :]


def subdomain_wavenumber(mesh: TriMesh, spec: ProblemSpec, s: Subdomain) -> float:
    """``k_s = sup over the subdomain of omega sqrt(m / a)``."""
    return float(spec.wavenumber_at(mesh.barycentres()[s.elements]).max())


def dtn_threshold(preset: str | float, k_s: float) -> float:
    """DtN threshold: ``"k"`` -> k_s, ``"k43"`` -> k_s**(4/3), a number -> itself."""
    if preset == "k":
        return k_s
    if preset == "k43":
        return k_s ** (4.0 / 3.0)
    return float(preset)


# -- DtN ---------------------------------------------------------------------------


@dataclass
class DtnOperators:
    S: np.ndarray  # Schur complement on the interface
    M: np.ndarray  # interface mass matrix
    X: np.ndarray  # A_II^{-1} A_IG
    iface: np.ndarray  # local positions of interface dofs
    interior: np.ndarray  # local positions of interior dofs


def dtn_operators(mesh: TriMesh, s: Subdomain, lm: LocalMatrices) -> DtnOperators:
    G, I = s.interface_local, s.interior_local
    A = lm.A.tocsr()
    A_II = A[I][:, I]
    A_IG = A[I][:, G].toarray()
    A_GI = A[G][:, I]
    try:
        X = lu_factor(A_II, context=f"subdomain {s.id} interior block").solve(A_IG)
    except SingularMatrixError as exc:
        raise SingularMatrixError(f"interior Dirichlet block of subdomain {s.id} is singular", exc.pivot) from None
    X = np.asarray(X).reshape(len(I), len(G))
    S = lm.A_tilde.tocsr()[G][:, G].toarray() - A_GI @ X
    M, nodes = assemble_boundary_mass(mesh, s.interface_edges)
    assert np.array_equal(nodes, s.interface_dofs)
    return DtnOperators(S=np.asarray(S), M=M.toarray(), X=X, iface=G, interior=I)


def dtn_spectrum(mesh: TriMesh, s: Subdomain, lm: LocalMatrices) -> LocalSpectrum:
    if not s.has_interface:
        return _empty(Method.DTN, s)
    ops = dtn_operators(mesh, s, lm)

    def lift(uG):
        u = np.zeros(s.n_dofs, dtype=complex)
        u[ops.iface] = uG
        u[ops.interior] = -ops.X @ uG
        return u

    return _from_pairs(s, Method.DTN, qz_eig(ops.S, ops.M), lift)


# -- GenEO family --------------------------------------------------------------------


def delta_geneo_spectrum(mesh: TriMesh, s: Subdomain, lm: LocalMatrices) -> LocalSpectrum:
    if not s.has_interface:
        return _empty(Method.DELTA_GENEO, s)
    pairs = qz_eig(lm.L_tilde.toarray(), _weight(s, lm.L))
    return _from_pairs(s, Method.DELTA_GENEO, pairs)


def hk_geneo_spectrum(mesh: TriMesh, s: Subdomain, lm: LocalMatrices, p_choice: str = "positive_helmholtz") -> LocalSpectrum:
    if not s.has_interface:
        return _empty(Method.HK_GENEO, s)
    if p_choice == "positive_helmholtz":
        P = lm.B
    elif p_choice == "laplace":
        P = lm.L
    else:
        raise ConfigurationError(f"unknown P choice {p_choice!r}")
    pairs = qz_eig(lm.A_tilde.toarray(), _weight(s, P))
    return _from_pairs(s, Method.HK_GENEO, pairs)


# -- harmonic ------------------------------------------------------------------------


def _free_local(mesh: TriMesh, s: Subdomain) -> np.ndarray:
    dn = dirichlet_nodes(mesh)
    return np.flatnonzero(~np.isin(s.dofs, dn))


def harmonic_saddle_pencil(mesh: TriMesh, s: Subdomain, lm: LocalMatrices):
    """Dense saddle-point pencil over the non-Dirichlet local dofs.

    Returns ``(LHS, RHS, free)`` with ``free`` the local positions the
    u-block refers to.
    """
    free = _free_local(mesh, s)
    rows = s.interior_local
    A0 = lm.A.tocsr()[rows][:, free].toarray()
    Bt = lm.B_tilde.toarray()[np.ix_(free, free)]
    DBD = _weight(s, lm.B)[np.ix_(free, free)]
    n, c = len(free), len(rows)
    lhs = np.zeros((n + c, n + c), dtype=complex)
    lhs[:n, :n] = Bt
    lhs[:n, n:] = A0.conj().T
    lhs[n:, :n] = A0
    rhs = np.zeros_like(lhs)
    rhs[:n, :n] = DBD
    return lhs, rhs, free


def harmonic_basis(s: Subdomain, lm: LocalMatrices) -> np.ndarray:
    """Columns spanning the local discrete Helmholtz-harmonic space.

    Interface values are free; interior values follow from the interior
    rows of the Dirichlet matrix.
    """
    G, I = s.interface_local, s.interior_local
    A = lm.A.tocsr()
    X = lu_factor(A[I][:, I], context=f"subdomain {s.id} interior block").solve(A[I][:, G].toarray())
    N = np.zeros((s.n_dofs, len(G)), dtype=complex)
    N[G, np.arange(len(G))] = 1.0
    N[I] = -np.asarray(X).reshape(len(I), len(G))
    return N


SADDLE_QZ_LIMIT = 1200


def harmonic_spectrum(mesh: TriMesh, s: Subdomain, lm: LocalMatrices, solver: str = "auto") -> LocalSpectrum:
    """Harmonic coarse-space spectrum.

    ``solver="saddle"`` runs QZ on the augmented saddle-point pencil;
    ``solver="reduced"`` parametrizes the constraint space explicitly by
    interface values and solves the equivalent Hermitian-definite pencil.
    ``"auto"`` uses the saddle pencil up to ``SADDLE_QZ_LIMIT`` unknowns.
    """
    if not s.has_interface:
        return _empty(Method.HARMONIC, s)
    if solver == "auto":
        size = 2 * s.n_dofs - len(s.interface_dofs)
        solver = "saddle" if size <= SADDLE_QZ_LIMIT else "reduced"
    if solver == "saddle":
        lhs, rhs, free = harmonic_saddle_pencil(mesh, s, lm)
        n = len(free)

        def lift(v):
            u = np.zeros(s.n_dofs, dtype=complex)
            u[free] = v[:n]
            return u

        return _from_pairs(s, Method.HARMONIC, qz_eig(lhs, rhs), lift, check_real=True)
    if solver == "reduced":
        N = harmonic_basis(s, lm)
        lhs = N.conj().T @ (lm.B_tilde @ N)
        rhs = N.conj().T @ (_weight(s, lm.B) @ N)
        lhs = (lhs + lhs.conj().T) / 2
        rhs = (rhs + rhs.conj().T) / 2
        pairs = definite_pencil_smallest(lhs, rhs, context=f"subdomain {s.id}")
        return _from_pairs(s, Method.HARMONIC, pairs, lambda y: N @ y, check_real=True)
    raise ConfigurationError(f"unknown harmonic solver {solver!r}")


# -- extended harmonic ---------------------------------------------------------------


@dataclass
class ExtendedOperator:
    """``G = R_s Rc_s^T - Ahat_s^{-1} R_s Rc_s^T Ac_s`` from extended to local vectors."""

    pick: np.ndarray  # positions of the subdomain dofs inside the extended dofs
    A_rows: sp.csr_matrix  # rows of Ac_s at the subdomain dofs
    fact: Factorization
    n_ext: int

    def apply(self, v):
        return v[self.pick] - self.fact.solve(self.A_rows @ v)

    def dense(self) -> np.ndarray:
        n = len(self.pick)
        G = -np.asarray(self.fact.solve(self.A_rows.toarray().astype(complex))).reshape(n, self.n_ext)
        G[np.arange(n), self.pick] += 1.0
        return G


def extended_operator(s: Subdomain, lm: LocalMatrices) -> ExtendedOperator:
    ext = s.ext_dofs
    pick = np.searchsorted(ext, s.dofs)
    return ExtendedOperator(pick, lm.A_check.tocsr()[pick], lm.A_hat_fact, len(ext))


def extended_rhs(s: Subdomain, lm: LocalMatrices, G: np.ndarray | None = None) -> np.ndarray:
    """Dense ``G^H (D B D) G``."""
    if G is None:
        G = extended_operator(s, lm).dense()
    rhs = G.conj().T @ (_weight(s, lm.B) @ G)
    return (rhs + rhs.conj().T) / 2


def extended_spectrum(mesh: TriMesh, s: Subdomain, lm: LocalMatrices) -> LocalSpectrum:
    if not s.has_interface:
        return _empty(Method.EXTENDED, s)
    op = extended_operator(s, lm)
    G = op.dense()
    pairs = definite_pencil_smallest(lm.B_tilde_check.toarray(), extended_rhs(s, lm, G), context=f"subdomain {s.id}")
    return _from_pairs(s, Method.EXTENDED, pairs, lambda v: G @ v, check_real=True)


# -- drivers ---------------------------------------------------------------------------

_SPECTRA = {
    Method.DTN: dtn_spectrum,
    Method.DELTA_GENEO: delta_geneo_spectrum,
    Method.HK_GENEO: hk_geneo_spectrum,
    Method.HARMONIC: harmonic_spectrum,
    Method.EXTENDED: extended_spectrum,
}


def local_spectrum(method, mesh, s, lm, **opts) -> LocalSpectrum:
    method = Method(method)
    if method is Method.ONE_LEVEL:
        raise ConfigurationError("one-level method has no coarse space")
    if method is Method.EXTENDED and s.extended_dofs is None and s.has_interface:
        raise ConfigurationError("extended harmonic coarse space needs build_extended first")
    return _SPECTRA[method](mesh, s, lm, **opts)


def compute_spectra(method, decomposition: Decomposition, local_mats, threads: int = 1, **opts) -> list[LocalSpectrum]:
    mesh = decomposition.mesh
    work = list(zip(decomposition.subdomains, local_mats))
    if threads == 1:
        return [local_spectrum(method, mesh, s, lm, **opts) for s, lm in work]
    with ThreadPoolExecutor(max_workers=threads or None) as ex:
        return list(ex.map(lambda sl: local_spectrum(method, mesh, sl[0], sl[1], **opts), work))


def build_dtn(mesh, s, lm, rule: SelectionRule) -> CoarseColumns:
    return dtn_spectrum(mesh, s, lm).columns(rule)


def build_delta_geneo(mesh, s, lm, rule: SelectionRule) -> CoarseColumns:
    return delta_geneo_spectrum(mesh, s, lm).columns(rule)


def build_hk_geneo(mesh, s, lm, rule: SelectionRule, p_choice: str = "positive_helmholtz") -> CoarseColumns:
    return hk_geneo_spectrum(mesh, s, lm, p_choice).columns(rule)


def build_harmonic(mesh, s, lm, rule: SelectionRule, solver: str = "auto") -> CoarseColumns:
    return harmonic_spectrum(mesh, s, lm, solver).columns(rule)


def build_extended_harmonic(mesh, s, lm, rule: SelectionRule) -> CoarseColumns:
    return extended_spectrum(mesh, s, lm).columns(rule)


@dataclass
class CoarseSpace:
    Z: sp.csc_matrix
    subdomain: np.ndarray  # per column
    eigenvalues: np.ndarray  # per column
    method: str
    E: np.ndarray
    E_fact: Factorization

    @property
    def size(self) -> int:
        return self.Z.shape[1]

    def counts(self, N: int) -> np.ndarray:
        return np.bincount(self.subdomain, minlength=N)

    def apply_Q(self, v):
        """``Q v = Z E^{-1} Z^H v``."""
        return self.Z @ self.E_fact.solve(self.Z.conj().T @ v)


def assemble_coarse(columns: list[CoarseColumns], A: sp.spmatrix, n: int | None = None) -> CoarseSpace:
    """Stack per-subdomain columns into ``Z`` and factorize ``E = Z^H A Z``."""
    columns = sorted(columns, key=lambda c: c.subdomain)
    n = A.shape[0] if n is None else n
    rows, cols, vals, sub, lam = [], [], [], [], []
    j = 0
    method = columns[0].method.value if columns else ""
    for c in columns:
        for k in range(c.count):
            v = c.vectors[:, k]
            nz = np.flatnonzero(v)
            rows.append(c.dofs[nz])
            cols.append(np.full(len(nz), j))
            vals.append(v[nz])
            sub.append(c.subdomain)
            lam.append(c.eigenvalues[k])
            j += 1
    if j == 0:
        raise ConfigurationError("coarse space is empty")
    Z = sp.csc_matrix(
        (np.concatenate(vals).astype(complex), (np.concatenate(rows), np.concatenate(cols))), shape=(n, j)
    )
    return coarse_from_matrix(Z, A, np.array(sub), np.array(lam, dtype=complex), method)


def coarse_from_matrix(Z, A, subdomain=None, eigenvalues=None, method: str = "") -> CoarseSpace:
    Z = sp.csc_matrix(Z, dtype=complex)
    j = Z.shape[1]
    E = (Z.conj().T @ (A @ Z))
    E = E.toarray() if sp.issparse(E) else np.asarray(E)
    try:
        fact = lu_factor(E, context="coarse operator")
    except SingularMatrixError as exc:
        raise SingularMatrixError(
            f"coarse operator E = Z^H A Z is singular ({exc}); use a smaller coarse space or another threshold",
            exc.pivot,
        ) from None
    if subdomain is None:
        subdomain = np.zeros(j, dtype=int)
    if eigenvalues is None:
        eigenvalues = np.full(j, np.nan, dtype=complex)
    return CoarseSpace(Z, subdomain, eigenvalues, method, E, fact)


def export_eigenvalues(spectra: list[LocalSpectrum], rule: SelectionRule, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["subdomain", "index", "re_lambda", "im_lambda", "retained"])
        for spec in spectra:
            for row in spec.rows(rule):
                w.writerow([row[0], row[1], repr(row[2]), repr(row[3]), row[4]])
