"""Factorized solvers for the symmetric positive (semi)definite mass matrices."""
from __future__ import annotations

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import RankDeficiencyError

DENSE_LIMIT = 2500


class SpdSolver:
    """Solve ``K x = b`` for symmetric positive definite ``K``.

    Small systems use a dense Cholesky factor, large sparse ones SuperLU.
    If ``null_vector`` is given, ``K`` may be singular along that direction
    only; solves then return the solution orthogonal to it (right-hand sides
    must be orthogonal to it as well).
    """

    def __init__(self, K, null_vector=None, dense_limit: int = DENSE_LIMIT, label: str = "matrix"):
        self.n = K.shape[0]
        self.label = label
        self.null_vector = None
        if null_vector is not None:
            nv = np.asarray(null_vector, dtype=float)
            self.null_vector = nv / np.linalg.norm(nv)
        self.dense = self.n <= dense_limit or not sp.issparse(K)
        if self.dense:
            Kd = K.toarray() if sp.issparse(K) else np.asarray(K, dtype=float)
            if self.null_vector is not None:
                alpha = np.trace(Kd) / self.n
                Kd = Kd + alpha * np.outer(self.null_vector, self.null_vector)
            try:
                self._cho = sla.cho_factor(Kd, lower=True)
            except np.linalg.LinAlgError as exc:
                raise RankDeficiencyError(f"{label} is not positive definite: {exc}") from exc
            d = np.diag(self._cho[0])
            if d.min() <= 1e-7 * d.max():
                raise RankDeficiencyError(
                    f"{label} is numerically rank deficient (Cholesky pivot ratio {d.min() / d.max():.2e})"
                )
        else:
            Ks = sp.csc_matrix(K)
            if self.null_vector is not None:
                nv = sp.csc_matrix(self.null_vector[:, None])
                Ks = sp.bmat([[Ks, nv], [nv.T, None]], format="csc")
            try:
                self._lu = spla.splu(Ks)
            except RuntimeError as exc:
                raise RankDeficiencyError(f"{label} is singular: {exc}") from exc
            u = np.abs(self._lu.U.diagonal())
            if u.min() <= 1e-14 * u.max():
                raise RankDeficiencyError(f"{label} is numerically rank deficient")

    def solve(self, b: np.ndarray) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        if self.dense:
            return sla.cho_solve(self._cho, b)
        if self.null_vector is not None:
            pad = np.zeros((1,) + b.shape[1:])
            return self._lu.solve(np.concatenate([b, pad]))[: self.n]
        return self._lu.solve(b)
