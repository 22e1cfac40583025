"""Constraint-energy-minimizing velocity basis on oversampled patches.

For each auxiliary function p_j^i the basis field ψ and multiplier μ solve,
on the interior edges / cells of the patch K_{i,ℓ},

    A ψ − Bᵀ μ           = 0
    B ψ + S P Pᵀ S μ     = S p_j^i

where P holds the auxiliary columns of the patch elements (so S P Pᵀ S is the
matrix of s(π·, π·)). The low-rank block is kept factored by carrying
z = Pᵀ S μ as an extra unknown, which gives the sparse symmetric system

    [ A    −Bᵀ    0  ] [ψ]   [   0    ]
    [ −B    0   −S P ] [μ] = [ −S p   ]
    [ 0   −PᵀS    I  ] [z]   [   0    ]
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import FineOperators
from .errors import RankDeficiencyError, SingularSystemError
from .grid import GridHierarchy, Patch, oversample
from .linalg import SpdSolver
from .spectral import AuxiliarySpace

log = logging.getLogger(__name__)

RESIDUAL_LIMIT = 1e-8


class PatchSystem:
    """Factorized CEM saddle system on one oversampled patch."""

    def __init__(self, g: GridHierarchy, ops: FineOperators, aux: AuxiliarySpace, i: int, ell: int):
        self.element = i
        self.ell = ell
        self.patch: Patch = oversample(g, i, ell)
        cells, edges = self.patch.cells, self.patch.interior_edges
        self.cols = aux.columns_of(self.patch.element_set)
        self.A = ops.A[edges][:, edges].tocsr()
        self.B = ops.B[cells][:, edges].tocsr()
        self.s = aux.s_diag[cells]
        self.P = aux.P[cells][:, self.cols].tocsc()
        SP = sp.diags(self.s) @ self.P
        self.ne, self.nc, self.nz = edges.size, cells.size, self.cols.size
        K = sp.bmat(
            [
                [self.A, -self.B.T, None],
                [-self.B, None, -SP],
                [None, -SP.T, sp.identity(self.nz)],
            ],
            format="csc",
        )
        try:
            self._lu = spla.splu(K)
        except RuntimeError as exc:
            raise SingularSystemError(f"CEM system on patch of element {i} (ell={ell}) is singular: {exc}") from exc

    def local_column(self, aux: AuxiliarySpace, j: int) -> int:
        return int(np.flatnonzero(self.cols == aux.column(self.element, j))[0])

    def solve(self, rhs_cells: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Solve with right-hand side ``S q`` for patch cell fields ``q`` (columns)."""
        q = np.atleast_2d(np.asarray(rhs_cells, dtype=float).T).T
        rhs = np.zeros((self.ne + self.nc + self.nz, q.shape[1]))
        rhs[self.ne : self.ne + self.nc] = -(self.s[:, None] * q)
        x = self._lu.solve(rhs)
        return x[: self.ne], x[self.ne : self.ne + self.nc]

    def residual(self, psi: np.ndarray, mu: np.ndarray, q: np.ndarray) -> float:
        """Relative residual of both block equations (max over columns)."""
        psi, mu, q = (np.atleast_2d(np.asarray(a).T).T for a in (psi, mu, q))
        sq = self.s[:, None] * q
        r1 = self.A @ psi - self.B.T @ mu
        r2 = self.B @ psi + self.s[:, None] * (self.P @ (self.P.T @ (self.s[:, None] * mu))) - sq
        scale1 = np.maximum(np.linalg.norm(self.B.T @ mu, axis=0), np.linalg.norm(self.A @ psi, axis=0))
        scale2 = np.linalg.norm(sq, axis=0)
        rel1 = np.linalg.norm(r1, axis=0) / np.where(scale1 > 0, scale1, 1.0)
        rel2 = np.linalg.norm(r2, axis=0) / np.where(scale2 > 0, scale2, 1.0)
        return float(max(rel1.max(initial=0.0), rel2.max(initial=0.0)))


def build_cem_basis(g: GridHierarchy, ops: FineOperators, aux: AuxiliarySpace, i: int, j: int, ell: int):
    """Single basis pair (ψ on all fine edges, μ on all cells) for auxiliary function (i, j)."""
    system = PatchSystem(g, ops, aux, i, ell)
    q = system.P[:, system.local_column(aux, j)].toarray().ravel()
    psi_loc, mu_loc = system.solve(q)
    res = system.residual(psi_loc, mu_loc, q)
    if res > RESIDUAL_LIMIT:
        raise SingularSystemError(f"CEM solve on element {i} has residual {res:.2e}")
    psi = np.zeros(g.n_edges)
    psi[system.patch.interior_edges] = psi_loc[:, 0]
    mu = np.zeros(g.n_cells)
    mu[system.patch.cells] = mu_loc[:, 0]
    return psi, mu


@dataclass(frozen=True)
class CemVelocityBasis:
    Psi: sp.csr_matrix  # (n_edges, M); zero on boundary edges
    Mu: sp.csr_matrix  # (n_cells, M) multipliers
    ell: int
    patches: list[Patch]
    residuals: np.ndarray  # per element
    constant_mode: bool  # Ψ annihilates the global constant-pressure direction

    @property
    def M(self) -> int:
        return self.Psi.shape[1]

    def gram(self, ops: FineOperators) -> sp.csr_matrix:
        return (self.Psi.T @ ops.A @ self.Psi).tocsr()


def constant_pressure_direction(aux: AuxiliarySpace) -> np.ndarray:
    """Coefficients c with P c = 1 (the S-projection of the constant)."""
    return aux.P.T @ aux.s_diag


def detect_constant_mode(Psi, ops: FineOperators, aux: AuxiliarySpace, tol: float = 1e-10) -> bool:
    """True if ψ-combination for the global constant pressure vanishes.

    That happens exactly when every patch covers Ω: the constant is then
    invisible to the divergence constraint and V_ms has dimension M − 1.
    """
    c0 = constant_pressure_direction(aux)
    c0 = c0 / np.linalg.norm(c0)
    w = Psi @ c0
    energy = float(w @ (ops.A @ w))
    diag = (Psi.multiply(ops.A @ Psi)).sum(axis=0)
    typical = float(np.asarray(diag).mean())
    return energy <= tol * typical


def assemble_velocity_space(
    g: GridHierarchy, ops: FineOperators, aux: AuxiliarySpace, ell: int, check_rank: bool = True
) -> CemVelocityBasis:
    psi_r, psi_c, psi_v = [], [], []
    mu_r, mu_c, mu_v = [], [], []
    patches, residuals = [], np.zeros(g.n_elements)
    for i in range(g.n_elements):
        system = PatchSystem(g, ops, aux, i, ell)
        own = aux.columns_of([i])
        local = np.searchsorted(system.cols, own)
        q = system.P[:, local].toarray()
        psi, mu = system.solve(q)
        residuals[i] = system.residual(psi, mu, q)
        if residuals[i] > RESIDUAL_LIMIT:
            raise SingularSystemError(f"CEM solve on element {i} has residual {residuals[i]:.2e}")
        edges, cells = system.patch.interior_edges, system.patch.cells
        psi_r.append(np.repeat(edges, own.size))
        psi_c.append(np.tile(own, edges.size))
        psi_v.append(psi.ravel())
        mu_r.append(np.repeat(cells, own.size))
        mu_c.append(np.tile(own, cells.size))
        mu_v.append(mu.ravel())
        patches.append(system.patch)
    M = aux.M
    Psi = sp.csr_matrix((np.concatenate(psi_v), (np.concatenate(psi_r), np.concatenate(psi_c))), shape=(g.n_edges, M))
    Mu = sp.csr_matrix((np.concatenate(mu_v), (np.concatenate(mu_r), np.concatenate(mu_c))), shape=(g.n_cells, M))
    constant_mode = detect_constant_mode(Psi, ops, aux)
    basis = CemVelocityBasis(Psi, Mu, ell, patches, residuals, constant_mode)
    if check_rank:
        check_gram_rank(basis, ops, aux)
    return basis


def check_gram_rank(basis: CemVelocityBasis, ops: FineOperators, aux: AuxiliarySpace) -> None:
    """Raise if ΨᵀAΨ is singular beyond the known constant-pressure mode."""
    G = basis.gram(ops)
    null = constant_pressure_direction(aux) if basis.constant_mode else None
    if null is not None:
        log.info("patches cover the domain: Gram matrix singular along the constant-pressure mode")
    try:
        SpdSolver(G, null_vector=null, label="velocity Gram matrix")
    except RankDeficiencyError as exc:
        Gd = G.toarray() if G.shape[0] <= 4000 else None
        if Gd is None:
            raise
        w, V = np.linalg.eigh(Gd)
        bad = np.flatnonzero(w <= 1e-12 * w.max())
        cols = sorted({int(np.argmax(np.abs(V[:, k]))) for k in bad})
        raise RankDeficiencyError(f"{exc}; offending columns {cols}") from exc
