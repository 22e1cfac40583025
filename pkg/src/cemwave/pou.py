"""Multiscale partition of unity and the spectral weight κ̃ = κ Σ_j |∇χ_j|².

Each χ_j is computed element by element: on every coarse element K touching
the interior coarse node x_j we take the discrete κ-harmonic extension of the
coarse bilinear hat restricted to ∂K. The hat vanishes on ∂ω_j, so this
matches the zero condition there.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .assembly import FineOperators, MediumFields, assemble_nodal_stiffness, assemble_pressure_mass
from .grid import GridHierarchy

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PartitionOfUnity:
    """``chi[j, v]`` is χ_j at fine vertex ``v`` (zero outside ω_j)."""

    chi: sp.csr_matrix
    kappa_tilde: np.ndarray

    def node(self, j: int) -> np.ndarray:
        return self.chi[j].toarray().ravel()


def gradient_squared(corner_values, hx: float, hy: float, average: bool = False):
    """|∇χ|² of the bilinear interpolant on a cell.

    ``corner_values[..., k]`` holds χ at the local corners (00, 10, 01, 11).
    By default the gradient is taken at the cell center; ``average=True``
    returns the cell mean of |∇χ|² instead.
    """
    v = np.asarray(corner_values, dtype=float)
    v00, v10, v01, v11 = v[..., 0], v[..., 1], v[..., 2], v[..., 3]
    ax0, ax1 = (v10 - v00) / hx, (v11 - v01) / hx  # ∂x at bottom / top
    by0, by1 = (v01 - v00) / hy, (v11 - v10) / hy  # ∂y at left / right
    if average:
        return (ax0**2 + ax0 * ax1 + ax1**2) / 3.0 + (by0**2 + by0 * by1 + by1**2) / 3.0
    return (0.5 * (ax0 + ax1)) ** 2 + (0.5 * (by0 + by1)) ** 2


def _hat(g: GridHierarchy, j: int, xy: np.ndarray) -> np.ndarray:
    kx, ky = g.interior_node(j)
    H = g.H
    wx = np.clip(1.0 - np.abs(xy[:, 0] - kx * H) / H, 0.0, None)
    wy = np.clip(1.0 - np.abs(xy[:, 1] - ky * H) / H, 0.0, None)
    return wx * wy


def solve_pou(g: GridHierarchy, m: MediumFields, cell_average: bool = False) -> PartitionOfUnity:
    kappa = m.kappa
    coords = g.vertex_coords()
    kappa_tilde = np.zeros(g.n_cells)
    rows, cols, vals = [], [], []
    for i in range(g.n_elements):
        corners = g.element_interior_nodes(i)
        if not corners:
            continue
        cells = g.element_cells(i)
        patch_nodes = np.unique(g.cell_vertices[cells])
        xy = coords[patch_nodes]
        jx, jy = g.element_box(i)
        on_boundary = (
            np.isclose(xy[:, 0], jx * g.H)
            | np.isclose(xy[:, 0], (jx + 1) * g.H)
            | np.isclose(xy[:, 1], jy * g.H)
            | np.isclose(xy[:, 1], (jy + 1) * g.H)
        )
        system = assemble_nodal_stiffness(g, kappa, cells, patch_nodes[on_boundary])
        local_cv = np.searchsorted(system.nodes, g.cell_vertices[cells])
        bxy = coords[system.nodes[system.dirichlet]]
        grad2 = np.zeros(cells.size)
        for j in corners:
            values = system.solve(_hat(g, j, bxy))
            rows.append(np.full(values.size, j))
            cols.append(system.nodes)
            vals.append(values)
            grad2 += gradient_squared(values[local_cv], g.h, g.h, average=cell_average)
        kappa_tilde[cells] = kappa[cells] * grad2

    rows, cols, vals = np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)
    # vertices on shared coarse edges appear once per element; the values agree
    _, first = np.unique(rows * g.n_vertices + cols, return_index=True)
    chi = sp.csr_matrix((vals[first], (rows[first], cols[first])), shape=(g.n_interior_nodes, g.n_vertices))
    chi.eliminate_zeros()
    return PartitionOfUnity(chi=chi, kappa_tilde=kappa_tilde)


def attach_weight(ops: FineOperators, pou: PartitionOfUnity, floor_rel: float = 1e-14) -> int:
    """Fill ``ops.S`` with the κ̃-weighted cell mass; returns the number of floored cells."""
    kt = pou.kappa_tilde.copy()
    floor = floor_rel * kt.max()
    low = kt <= floor
    if low.any():
        log.warning("κ̃ floored to %.3e on %d cells", floor, int(low.sum()))
        kt[low] = floor
    ops.kappa_tilde = kt
    ops.S = assemble_pressure_mass(ops.grid, kt)
    return int(low.sum())
