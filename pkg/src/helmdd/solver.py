"""One- and two-level ORAS preconditioners and the GMRES driver."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np
import scipy.sparse as sp

from .coarse import CoarseSpace
from .decomp import Decomposition, LocalMatrices
from .linalg import Factorization, GmresConfig, GmresResult, gmres


class OneLevelPreconditioner:
    """``M^{-1} = sum_s R_s^T D_s Ahat_s^{-1} R_s``."""

    def __init__(self, n: int, dofs: list[np.ndarray], weights: list[np.ndarray],
                 factors: list[Factorization], threads: int = 1):
        self.n = n
        self.dofs = dofs
        self.weights = weights
        self.factors = factors
        self.threads = threads

    @classmethod
    def from_decomposition(cls, decomposition: Decomposition, local_mats: list[LocalMatrices], threads: int = 1):
        subs = decomposition.subdomains
        return cls(
            decomposition.mesh.n_vertices,
            [s.dofs for s in subs],
            [s.pou_weights for s in subs],
            [lm.A_hat_fact for lm in local_mats],
            threads,
        )

    def _local(self, s: int, v: np.ndarray) -> np.ndarray:
        return self.weights[s] * self.factors[s].solve(v[self.dofs[s]])

    def apply(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=complex)
        if self.threads == 1:
            parts = [self._local(s, v) for s in range(len(self.dofs))]
        else:
            with ThreadPoolExecutor(max_workers=self.threads or None) as ex:
                parts = list(ex.map(lambda s: self._local(s, v), range(len(self.dofs))))
        out = np.zeros(self.n, dtype=complex)
        # fixed subdomain order keeps the sum bitwise reproducible
        for dofs, part in zip(self.dofs, parts):
            out[dofs] += part
        return out

    __call__ = apply


class TwoLevelPreconditioner:
    """Deflated two-level ORAS: ``M^{-1} (I - A Q) + Q`` with ``Q = Z E^{-1} Z^H``."""

    def __init__(self, one_level: OneLevelPreconditioner, coarse: CoarseSpace | None, A: sp.spmatrix):
        self.one_level = one_level
        self.coarse = coarse
        self.A = A

    def apply(self, v: np.ndarray) -> np.ndarray:
        if self.coarse is None or self.coarse.size == 0:
            return self.one_level.apply(v)
        v = np.asarray(v, dtype=complex)
        w = self.coarse.apply_Q(v)
        return self.one_level.apply(v - self.A @ w) + w

    __call__ = apply


def apply_one_level(P: OneLevelPreconditioner, v):
    return P.apply(v)


def apply_two_level(P: TwoLevelPreconditioner, v):
    return P.apply(v)


def solve(A: sp.spmatrix, b, P=None, cfg: GmresConfig = GmresConfig()) -> GmresResult:
    if P is not None and hasattr(P, "one_level"):
        n = P.one_level.n
    elif P is not None and hasattr(P, "n"):
        n = P.n
    else:
        n = A.shape[0]
    if A.shape[0] != len(b) or n != len(b):
        raise ValueError("dimension mismatch between matrix, right-hand side and preconditioner")
    return gmres(lambda x: A @ x, b, None if P is None else P.apply, cfg)
