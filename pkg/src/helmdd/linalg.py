"""Dense and sparse kernels: LU, generalized eigensolvers and full GMRES."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConfigurationError, NumericalError, SingularMatrixError

PIVOT_TOL = 1e-14
INFINITE_TOL = 1e-8  # QZ leaves spurious |beta| ~ 1e-11 scale on singular right-hand sides


class Factorization:
    """LU factorization of a square (complex) matrix, dense or sparse."""

    def __init__(self, M, context: str = ""):
        if M.shape[0] != M.shape[1]:
            raise ValueError(f"square matrix required, got shape {M.shape}")
        self.shape = M.shape
        self.n = M.shape[0]
        self.dtype = np.dtype(M.dtype)
        where = f" ({context})" if context else ""
        if self.n == 0:
            self._solve = lambda b: np.array(b, copy=True)
            return
        if sp.issparse(M):
            M = sp.csc_matrix(M)
            scale = abs(M).max() if M.nnz else 0.0
            try:
                lu = spla.splu(M)
            except RuntimeError as exc:
                raise SingularMatrixError(f"sparse LU failed{where}: {exc}") from None
            self._check_pivots(lu.U.diagonal(), scale, where)
            self._lu = lu
            self._solve = lu.solve
        else:
            M = np.asarray(M)
            scale = np.abs(M).max()
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", sla.LinAlgWarning)  # singularity is reported below
                lu, piv = sla.lu_factor(M, check_finite=False)
            self._check_pivots(np.diag(lu), scale, where)
            self._lu = (lu, piv)
            self._solve = lambda b: sla.lu_solve(self._lu, b, check_finite=False)

    @staticmethod
    def _check_pivots(diag, scale, where):
        small = np.flatnonzero(np.abs(diag) <= PIVOT_TOL * scale)
        if scale == 0.0 or small.size:
            pivot = int(small[0]) if small.size else 0
            raise SingularMatrixError(f"matrix is numerically singular at pivot {pivot}{where}", pivot=pivot)

    def solve(self, b):
        b = np.asarray(b)
        if b.shape[0] != self.n:
            raise ValueError(f"right-hand side has {b.shape[0]} rows, expected {self.n}")
        if self.n == 0:
            return b.copy()
        if np.iscomplexobj(b) and not np.issubdtype(self.dtype, np.complexfloating):
            return self._solve(np.ascontiguousarray(b.real)) + 1j * self._solve(np.ascontiguousarray(b.imag))
        dtype = np.result_type(self.dtype, b.dtype)
        return self._solve(np.ascontiguousarray(b, dtype=dtype))


def lu_factor(M, context: str = "") -> Factorization:
    return Factorization(M, context)


@dataclass
class EigenPair:
    eigenvalue: complex
    eigenvector: np.ndarray
    finite: bool = True


def normalize_phase(v: np.ndarray) -> np.ndarray:
    """Unit 2-norm with the first significant entry real and positive."""
    nrm = np.linalg.norm(v)
    if nrm == 0:
        return v
    v = v / nrm
    big = np.abs(v)
    i = int(np.argmax(big > 1e-10 * big.max()))
    if np.iscomplexobj(v):
        return v * (abs(v[i]) / v[i])
    return v if v[i] > 0 else -v


def _order(lam: np.ndarray) -> np.ndarray:
    # ascending real part, ties by |imag|, then original index
    return np.lexsort((np.arange(len(lam)), np.abs(lam.imag), lam.real))


def _dense(M):
    return M.toarray() if sp.issparse(M) else np.asarray(M)


def qz_eig(A, B) -> list[EigenPair]:
    """All generalized eigenpairs of the pencil ``A v = lambda B v``.

    Finite pairs come first, sorted by ascending real part (ties broken by
    ``|imag|`` then by index); infinite pairs follow in solver order with
    ``eigenvalue = inf``.
    """
    A, B = _dense(A), _dense(B)
    if A.shape != B.shape or A.shape[0] != A.shape[1]:
        raise ValueError(f"pencil dimension mismatch: {A.shape} vs {B.shape}")
    if A.shape[0] == 0:
        return []
    try:
        w, vr = sla.eig(A, B, right=True, homogeneous_eigvals=True, check_finite=False)
    except (sla.LinAlgError, ValueError) as exc:
        raise NumericalError(f"QZ iteration failed: {exc}") from None
    alpha, beta = w
    scale = np.linalg.norm(A) + np.linalg.norm(B)
    finite = np.abs(beta) > INFINITE_TOL * scale
    lam = np.full(len(alpha), np.inf, dtype=complex)
    lam[finite] = alpha[finite] / beta[finite]

    fin = np.flatnonzero(finite)
    fin = fin[_order(lam[fin])]
    inf = np.flatnonzero(~finite)
    pairs = [EigenPair(complex(lam[i]), normalize_phase(vr[:, i]), True) for i in fin]
    pairs += [EigenPair(complex(np.inf), normalize_phase(vr[:, i]), False) for i in inf]
    return pairs


def definite_pencil_smallest(
    Alhs, Brhs, count: int | None = None, threshold: float | None = None, context: str = ""
) -> list[EigenPair]:
    """Smallest eigenvalues of ``Alhs v = lambda Brhs v`` (Alhs SPD, Brhs PSD).

    Solved through the swapped problem ``Brhs v = mu Alhs v`` with a
    Cholesky factorization of ``Alhs``; ``lambda = 1 / mu``.  Modes with
    ``mu <= 0`` (numerically) correspond to infinite ``lambda`` and are
    dropped.  Selection: ``lambda < threshold`` and/or the ``count``
    smallest; with neither, every finite eigenvalue is returned.
    """
    Alhs, Brhs = _dense(Alhs), _dense(Brhs)
    if Alhs.shape != Brhs.shape or Alhs.shape[0] != Alhs.shape[1]:
        raise ValueError(f"pencil dimension mismatch: {Alhs.shape} vs {Brhs.shape}")
    if Alhs.shape[0] == 0:
        return []
    try:
        mu, V = sla.eigh(Brhs, Alhs, check_finite=False)
    except sla.LinAlgError as exc:
        where = f" ({context})" if context else ""
        raise NumericalError(f"left-hand matrix is not positive definite{where}: {exc}") from None
    mu = mu[::-1]
    V = V[:, ::-1]
    mu_max = max(np.abs(mu).max(), np.finfo(float).tiny)
    keep = mu > 1e-12 * mu_max
    lam = 1.0 / mu[keep]
    V = V[:, keep]
    sel = np.ones(len(lam), dtype=bool)
    if threshold is not None:
        sel &= lam < threshold
    idx = np.flatnonzero(sel)
    if count is not None:
        idx = idx[:count]
    return [EigenPair(complex(lam[i]), normalize_phase(V[:, i]), True) for i in idx]


# -- GMRES ---------------------------------------------------------------------


@dataclass(frozen=True)
class GmresConfig:
    rel_tol: float = 1e-6
    max_iters: int = 200

    def __post_init__(self):
        if not 0 < self.rel_tol < 1:
            raise ConfigurationError(f"rel_tol must lie in (0, 1), got {self.rel_tol}")
        if self.max_iters < 1:
            raise ConfigurationError(f"max_iters must be >= 1, got {self.max_iters}")


@dataclass
class GmresResult:
    """``residual_history[0]`` is the initial residual (1.0); entry k is after iteration k."""

    solution: np.ndarray
    residual_history: list[float] = field(default_factory=list)
    iterations: int = 0
    converged: bool = False


class GmresBreakdown(NumericalError):
    def __init__(self, message, iteration):
        super().__init__(message)
        self.iteration = iteration


BREAKDOWN_TOL = 1e-14


def gmres(
    apply_A: Callable, b, apply_Minv: Callable | None = None, cfg: GmresConfig = GmresConfig()
) -> GmresResult:
    """Full (non-restarted) right-preconditioned GMRES from a zero initial guess.

    Solves ``A M^{-1} y = b`` and returns ``x = M^{-1} y``.  With right
    preconditioning the minimized Arnoldi residual is the true residual
    ``||b - A x_k|| / ||b||``, which is what the history records.
    """
    b = np.asarray(b, dtype=complex)
    n = b.shape[0]
    if apply_Minv is None:
        apply_Minv = lambda v: v  # noqa: E731
    beta = np.linalg.norm(b)
    if beta == 0:
        raise ValueError("right-hand side must be nonzero")
    m = min(cfg.max_iters, n)
    V = np.zeros((m + 1, n), dtype=complex)
    Z = np.zeros((m, n), dtype=complex)
    H = np.zeros((m + 1, m), dtype=complex)
    cs = np.zeros(m, dtype=complex)
    sn = np.zeros(m, dtype=complex)
    g = np.zeros(m + 1, dtype=complex)
    g[0] = beta
    V[0] = b / beta
    history = [1.0]
    k = 0
    converged = False
    while k < m:
        Z[k] = apply_Minv(V[k])
        w = np.asarray(apply_A(Z[k]), dtype=complex)
        wnorm = np.linalg.norm(w)
        # classical Gram-Schmidt with one re-orthogonalization pass
        h = V[: k + 1].conj() @ w
        w = w - h @ V[: k + 1]
        h2 = V[: k + 1].conj() @ w
        w = w - h2 @ V[: k + 1]
        h = h + h2
        hnext = np.linalg.norm(w)
        H[: k + 1, k] = h
        H[k + 1, k] = hnext
        for i in range(k):
            t = cs[i] * H[i, k] + sn[i] * H[i + 1, k]
            H[i + 1, k] = -np.conj(sn[i]) * H[i, k] + np.conj(cs[i]) * H[i + 1, k]
            H[i, k] = t
        a, c = H[k, k], H[k + 1, k]
        r = np.hypot(abs(a), abs(c))
        if r == 0:
            raise GmresBreakdown(f"GMRES breakdown at iteration {k + 1}: zero Hessenberg column", k + 1)
        if abs(a) > 0:
            cs[k] = abs(a) / r
            sn[k] = (a / abs(a)) * np.conj(c) / r
        else:
            cs[k] = 0.0
            sn[k] = np.conj(c) / abs(c)
        H[k, k] = cs[k] * a + sn[k] * c
        H[k + 1, k] = 0.0
        g[k + 1] = -np.conj(sn[k]) * g[k]
        g[k] = cs[k] * g[k]
        k += 1
        res = abs(g[k]) / beta
        history.append(float(res))
        if res <= cfg.rel_tol:
            converged = True
            break
        if hnext < BREAKDOWN_TOL * max(wnorm, 1.0):
            raise GmresBreakdown(f"GMRES breakdown at iteration {k} before convergence", k)
        V[k] = w / hnext
    y = sla.solve_triangular(H[:k, :k], g[:k], check_finite=False)
    x = y @ Z[:k]
    return GmresResult(solution=x, residual_history=history, iterations=k, converged=converged)
