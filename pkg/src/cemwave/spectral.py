"""Local spectral problems and the auxiliary pressure space Q_ms.

On each coarse element K_i the velocity unknown of the saddle-point
eigenproblem is eliminated through the interior-edge velocity mass A_i:

    T p = λ S_i p,    T = B_i A_i⁻¹ B_iᵀ,

where B_i is the local divergence and S_i the κ̃-weighted cell mass.
The pencil is solved in inverted form on the complement of the constants
(see ``_quotient_eigh``). Columns of the auxiliary basis are S-orthonormal
and supported on a single element.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import FineOperators
from .errors import ConfigurationError, DomainError, SingularSystemError
from .grid import GridHierarchy, oversample


@dataclass(frozen=True)
class ElementSpectrum:
    element: int
    cells: np.ndarray
    eigenvalues: np.ndarray  # all computed pairs, ascending
    vectors: np.ndarray  # (cells, computed pairs), S_i-orthonormal
    J: int

    @property
    def retained(self) -> np.ndarray:
        return self.vectors[:, : self.J]

    @property
    def first_discarded(self) -> float:
        return float(self.eigenvalues[self.J]) if self.eigenvalues.size > self.J else math.inf


@dataclass(frozen=True)
class AuxiliarySpace:
    blocks: list[ElementSpectrum]
    P: sp.csr_matrix  # (n_cells, M)
    column_element: np.ndarray
    column_index: np.ndarray
    s_diag: np.ndarray
    Lambda: float

    @property
    def M(self) -> int:
        return self.P.shape[1]

    def columns_of(self, elements) -> np.ndarray:
        return np.flatnonzero(np.isin(self.column_element, elements))

    def column(self, i: int, j: int) -> int:
        hit = np.flatnonzero((self.column_element == i) & (self.column_index == j))
        if hit.size != 1:
            raise KeyError(f"no auxiliary column for element {i}, index {j}")
        return int(hit[0])


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def local_schur(g: GridHierarchy, ops: FineOperators, i: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Dense ``T = B_i A_i⁻¹ B_iᵀ``, the κ̃-weights of K_i, and the cell ids."""
    patch = oversample(g, i, 0)
    cells, edges = patch.cells, patch.interior_edges
    s = ops.s_diag[cells]
    if edges.size == 0:
        return np.zeros((cells.size, cells.size)), s, cells
    A_i = ops.A[edges][:, edges].tocsc()
    B_i = ops.B[cells][:, edges]
    try:
        lu = spla.splu(A_i)
    except RuntimeError as exc:
        raise SingularSystemError(f"local velocity mass of element {i} is singular: {exc}") from exc
    T = B_i @ lu.solve(B_i.T.toarray())
    return 0.5 * (T + T.T), s, cells


def solve_local_spectral(g: GridHierarchy, ops: FineOperators, i: int, J: int, L_extra: int = 1) -> ElementSpectrum:
    dim = g.refinement_ratio**2
    if J < 1 or J > dim:
        raise ConfigurationError(f"J={J} must lie in [1, {dim}] (cells per coarse element)")
    T, s, cells = local_schur(g, ops, i)
    if not np.all(s > 0):
        raise DomainError(f"κ̃-weighted mass is not positive definite on element {i}")
    k = min(J + L_extra, dim)
    w, vectors = _quotient_eigh(T, s, k)
    return ElementSpectrum(element=i, cells=cells, eigenvalues=w, vectors=_fix_signs(vectors), J=J)


def _quotient_eigh(T: np.ndarray, s: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Lowest ``k`` eigenpairs of ``T p = λ diag(s) p``, s-orthonormal.

    Local constants lie exactly in the kernel of T (each interior edge
    carries one +1 and one -1 in the divergence), so the first pair is
    (0, constant). The others are S-orthogonal to constants and solve, on
    the plain complement of the constant, the inverted pencil
    ``Ŝ z = μ T̂ z`` with μ = 1/λ. The wanted λ are then the dominant μ,
    which keeps them accurate when the weights span many decades.
    """
    n = s.size
    const = np.full((n, 1), 1.0 / np.sqrt(s.sum()))
    if k == 1 or n == 1:
        return np.zeros(1), const
    # Householder reflector mapping e_1 to the normalized constant; the other columns span its complement
    w = np.full(n, 1.0 / np.sqrt(n))
    w[0] -= 1.0
    Z = (np.eye(n) - 2.0 * np.outer(w, w) / (w @ w))[:, 1:]
    Th = Z.T @ T @ Z
    sz = s @ Z
    Sh = Z.T @ (s[:, None] * Z) - np.outer(sz, sz) / s.sum()
    try:
        mu, x = sla.eigh(0.5 * (Sh + Sh.T), 0.5 * (Th + Th.T), subset_by_index=[n - k, n - 2])
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError(f"local Schur operator is singular beyond the constants: {exc}") from exc
    mu, x = mu[::-1], x[:, ::-1]
    V = Z @ x
    V -= np.outer(np.ones(n), (s @ V) / s.sum())
    V /= np.sqrt((s[:, None] * V * V).sum(axis=0))
    return np.concatenate([[0.0], 1.0 / mu]), np.column_stack([const, V])


def build_auxiliary_space(g: GridHierarchy, ops: FineOperators, blocks) -> AuxiliarySpace:
    blocks = list(blocks)
    seen = {b.element for b in blocks}
    missing = sorted(set(range(g.n_elements)) - seen)
    if missing:
        raise SingularSystemError(f"spectral blocks missing for elements {missing[:10]}")
    blocks.sort(key=lambda b: b.element)
    rows, cols, vals, col_el, col_j = [], [], [], [], []
    col = 0
    for b in blocks:
        V = b.retained
        rows.append(np.repeat(b.cells, b.J))
        cols.append(np.tile(np.arange(col, col + b.J), b.cells.size))
        vals.append(V.ravel())
        col_el.extend([b.element] * b.J)
        col_j.extend(range(b.J))
        col += b.J
    P = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(g.n_cells, col)
    )
    return AuxiliarySpace(
        blocks=blocks,
        P=P,
        column_element=np.array(col_el),
        column_index=np.array(col_j),
        s_diag=ops.s_diag.copy(),
        Lambda=min(b.first_discarded for b in blocks),
    )


def build_auxiliary(g: GridHierarchy, ops: FineOperators, J: int, L_extra: int = 1) -> AuxiliarySpace:
    """Solve every local eigenproblem with a uniform J and assemble Q_ms."""
    return build_auxiliary_space(g, ops, [solve_local_spectral(g, ops, i, J, L_extra) for i in range(g.n_elements)])


def project_pi(q, aux: AuxiliarySpace) -> np.ndarray:
    """S-orthogonal projection of a cell field onto Q_ms."""
    q = np.asarray(q, dtype=float)
    return aux.P @ (aux.P.T @ (aux.s_diag * q))


def write_eigenvalue_csv(aux: AuxiliarySpace, path) -> None:
    """One row per element: ``element, lambda_1, ..., lambda_{J+1}``."""
    width = max(b.eigenvalues.size for b in aux.blocks)
    with open(path, "w", newline="") as fh:
        fh.write("element," + ",".join(f"lambda_{k + 1}" for k in range(width)) + "\n")
        for b in aux.blocks:
            fh.write(f"{b.element}," + ",".join(repr(float(x)) for x in b.eigenvalues) + "\n")
