"""Fine-scale operators for the RT0 x P0 pair and bilinear nodal elements.

The RT0 basis function of an edge carries unit flux through that edge in the
direction of the global orientation (+x for vertical, +y for horizontal
edges). With this scaling the divergence matrix has entries +-1 and the
velocity coefficients are edge fluxes.

``B`` is stored with pressure cells as rows: ``B[c, e] = ∫_c div φ_e``, so
``b(v, q) = q @ B @ v``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import DomainError, SingularSystemError
from .grid import GridHierarchy

# 1D RT0 edge mass on a unit interval
_EDGE_MASS = np.array([[1.0 / 3.0, 1.0 / 6.0], [1.0 / 6.0, 1.0 / 3.0]])


@dataclass(frozen=True)
class MediumFields:
    """Per-fine-cell permeability ``kappa`` and density ``rho``."""

    kappa: np.ndarray
    rho: np.ndarray

    def __post_init__(self):
        kappa = np.asarray(self.kappa, dtype=float).ravel()
        rho = np.asarray(self.rho, dtype=float).ravel()
        if kappa.shape != rho.shape:
            raise DomainError(f"kappa has {kappa.size} cells but rho has {rho.size}")
        _check_positive(kappa, "kappa")
        _check_positive(rho, "rho")
        object.__setattr__(self, "kappa", kappa)
        object.__setattr__(self, "rho", rho)

    @classmethod
    def uniform(cls, g: GridHierarchy, kappa: float = 1.0, rho: float = 1.0) -> "MediumFields":
        return cls(np.full(g.n_cells, float(kappa)), np.full(g.n_cells, float(rho)))

    def scaled(self, c: float) -> "MediumFields":
        return MediumFields(self.kappa * c, self.rho)


def _check_positive(values: np.ndarray, name: str) -> None:
    bad = np.flatnonzero(~(values > 0))
    if bad.size:
        raise DomainError(f"{name} must be positive; cell {bad[0]} has value {values[bad[0]]}")


def _check_size(g: GridHierarchy, values: np.ndarray, name: str) -> np.ndarray:
    values = np.asarray(values, dtype=float).ravel()
    if values.size != g.n_cells:
        raise DomainError(f"{name} has {values.size} entries, grid has {g.n_cells} cells")
    return values


def assemble_velocity_mass(g: GridHierarchy, m: MediumFields) -> sp.csr_matrix:
    """Matrix of a(v, w) = ∫ κ⁻¹ v·w on all fine edges (boundary edges included)."""
    kinv = 1.0 / _check_size(g, m.kappa, "kappa")
    hx = hy = g.h
    ce = g.cell_edges
    rows, cols, vals = [], [], []
    for pair, ratio in (((0, 1), hx / hy), ((2, 3), hy / hx)):
        for a in range(2):
            for b in range(2):
                rows.append(ce[:, pair[a]])
                cols.append(ce[:, pair[b]])
                vals.append(kinv * ratio * _EDGE_MASS[a, b])
    A = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(g.n_edges, g.n_edges),
    )
    return A.tocsr()


def assemble_div(g: GridHierarchy) -> sp.csr_matrix:
    """``B[c, e] = ∫_c div φ_e``; each cell row reads (-1, +1, -1, +1) on (left, right, bottom, top)."""
    ce = g.cell_edges
    signs = np.array([-1.0, 1.0, -1.0, 1.0])
    rows = np.repeat(np.arange(g.n_cells), 4)
    B = sp.coo_matrix((np.tile(signs, g.n_cells), (rows, ce.ravel())), shape=(g.n_cells, g.n_edges))
    return B.tocsr()


def assemble_pressure_mass(g: GridHierarchy, weight) -> sp.dia_matrix:
    """Diagonal weighted L² mass on the piecewise-constant pressure space."""
    weight = _check_size(g, weight, "weight")
    _check_positive(weight, "weight")
    return sp.diags(weight * g.h * g.h, format="csr")


def element_stiffness(hx: float, hy: float, kappa: float = 1.0) -> np.ndarray:
    """Bilinear element stiffness on an ``hx x hy`` rectangle, local order (00, 10, 01, 11)."""
    sx = np.array([[1.0, -1.0], [-1.0, 1.0]]) / hx
    sy = np.array([[1.0, -1.0], [-1.0, 1.0]]) / hy
    mx = np.array([[2.0, 1.0], [1.0, 2.0]]) * hx / 6.0
    my = np.array([[2.0, 1.0], [1.0, 2.0]]) * hy / 6.0
    return kappa * (np.kron(my, sx) + np.kron(sy, mx))


@dataclass
class NodalSystem:
    """κ-weighted bilinear stiffness on a set of fine cells with Dirichlet elimination.

    ``nodes`` are the global vertex ids touched by the region; ``K`` is the
    full (singular) region matrix in that local order. ``K_ff`` / ``K_fd`` are
    the free-free and free-Dirichlet blocks.
    """

    nodes: np.ndarray
    dirichlet: np.ndarray  # boolean mask over ``nodes``
    K: sp.csr_matrix
    K_ff: sp.csc_matrix
    K_fd: sp.csr_matrix
    _lu: object = field(default=None, repr=False)

    def solve(self, dirichlet_values: np.ndarray) -> np.ndarray:
        """Discrete κ-harmonic extension of the given Dirichlet values (full nodal vector)."""
        out = np.zeros(self.nodes.size)
        out[self.dirichlet] = dirichlet_values
        if self.K_ff.shape[0]:
            if self._lu is None:
                try:
                    self._lu = spla.splu(self.K_ff)
                except RuntimeError as exc:
                    raise SingularSystemError(f"nodal system is singular: {exc}") from exc
            rhs = -(self.K_fd @ np.asarray(dirichlet_values, dtype=float))
            out[~self.dirichlet] = self._lu.solve(rhs)
        return out


def assemble_nodal_stiffness(g: GridHierarchy, kappa, region, dirichlet_nodes) -> NodalSystem:
    """Bilinear stiffness over ``region`` (fine cell ids); ``dirichlet_nodes`` are global vertex ids."""
    kappa = _check_size(g, kappa, "kappa")
    region = np.asarray(region, dtype=np.int64)
    if region.size == 0:
        raise DomainError("nodal stiffness needs a nonempty region")
    dirichlet_nodes = np.unique(np.asarray(dirichlet_nodes, dtype=np.int64))
    if dirichlet_nodes.size == 0:
        raise SingularSystemError("nodal stiffness needs at least one Dirichlet node")

    cv = g.cell_vertices[region]
    nodes, local = np.unique(cv, return_inverse=True)
    local = local.reshape(cv.shape)
    ke = element_stiffness(g.h, g.h)
    rows = np.repeat(local, 4, axis=1).ravel()
    cols = np.tile(local, (1, 4)).ravel()
    vals = (kappa[region][:, None, None] * ke[None]).reshape(region.size, 16).ravel()
    K = sp.coo_matrix((vals, (rows, cols)), shape=(nodes.size, nodes.size)).tocsr()

    dirichlet = np.isin(nodes, dirichlet_nodes)
    if not dirichlet.any():
        raise SingularSystemError("no Dirichlet node lies in the region")
    free = ~dirichlet
    return NodalSystem(
        nodes=nodes,
        dirichlet=dirichlet,
        K=K,
        K_ff=K[free][:, free].tocsc(),
        K_fd=K[free][:, dirichlet].tocsr(),
    )


@dataclass
class FineOperators:
    """Fine-scale matrices and DOF bookkeeping.

    ``S`` (the κ̃-weighted cell mass) is filled in by :func:`cemwave.pou.attach_weight`.
    """

    grid: GridHierarchy
    medium: MediumFields
    A: sp.csr_matrix
    B: sp.csr_matrix
    M_rho: sp.csr_matrix
    M_plain: sp.csr_matrix
    S: sp.csr_matrix | None = None
    kappa_tilde: np.ndarray | None = None

    @property
    def boundary_edge_mask(self) -> np.ndarray:
        return self.grid.boundary_edge_mask

    @property
    def interior_edges(self) -> np.ndarray:
        return self.grid.interior_edges

    @property
    def s_diag(self) -> np.ndarray:
        if self.S is None:
            raise ValueError("κ̃-weighted mass not attached; run pou.attach_weight first")
        return self.S.diagonal()


def assemble_fine_operators(g: GridHierarchy, m: MediumFields) -> FineOperators:
    _check_size(g, m.kappa, "kappa")
    return FineOperators(
        grid=g,
        medium=m,
        A=assemble_velocity_mass(g, m),
        B=assemble_div(g),
        M_rho=assemble_pressure_mass(g, m.rho),
        M_plain=assemble_pressure_mass(g, np.ones(g.n_cells)),
    )
