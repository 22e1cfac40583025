"""Quick invariant suite run by ``cemwave check`` on a small copy of the configured medium."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse.linalg as spla

from ..assembly import MediumFields, assemble_fine_operators
from ..cem import assemble_velocity_space
from ..dynamics import assemble_reduced, fine_system, simulate, step_count
from ..grid import build_hierarchy
from ..pou import attach_weight, solve_pou
from ..spectral import build_auxiliary
from .fieldfile import load_medium
from .sources import make_source


@dataclass(frozen=True)
class CheckResult:
    name: str
    value: float
    tolerance: float

    @property
    def ok(self) -> bool:
        return bool(np.isfinite(self.value)) and self.value <= self.tolerance

    def line(self) -> str:
        return f"{'PASS' if self.ok else 'FAIL'}  {self.name}: {self.value:.3e} (tol {self.tolerance:.0e})"


def _operators(g, medium):
    ops = assemble_fine_operators(g, medium)
    pou = solve_pou(g, medium)
    attach_weight(ops, pou)
    return ops, pou


def pou_checks(g, medium) -> list[CheckResult]:
    _, pou = _operators(g, medium)
    xy = g.vertex_coords()
    far = np.all((xy >= g.H - 1e-12) & (xy <= 1 - g.H + 1e-12), axis=1)
    total = np.asarray(pou.chi.sum(axis=0)).ravel()
    chi = pou.chi.toarray()
    return [
        CheckResult("partition of unity |sum chi - 1|", float(np.abs(total[far] - 1).max()), 1e-10),
        CheckResult("maximum principle overshoot", float(max(-chi.min(), chi.max() - 1, 0.0)), 1e-12),
    ]


def spectral_checks(g, medium, J: int) -> list[CheckResult]:
    ops, _ = _operators(g, medium)
    aux = build_auxiliary(g, ops, J)
    lam1, const_dev, ortho = 0.0, 0.0, 0.0
    for b in aux.blocks:
        s = ops.s_diag[b.cells]
        lam1 = max(lam1, abs(b.eigenvalues[0]) / max(1.0, abs(b.eigenvalues[-1])))
        v0 = b.vectors[:, 0]
        const_dev = max(const_dev, float(np.ptp(v0) / np.abs(v0).max()))
        G = b.vectors.T @ (s[:, None] * b.vectors)
        ortho = max(ortho, float(np.abs(G - np.eye(G.shape[0])).max()))
    scaled_ops, _ = _operators(g, medium.scaled(1e3))
    aux_c = build_auxiliary(g, scaled_ops, J)
    scale = max(
        float(np.abs(a.eigenvalues - b.eigenvalues).max() / max(1.0, np.abs(a.eigenvalues).max()))
        for a, b in zip(aux.blocks, aux_c.blocks)
    )
    return [
        CheckResult("first local eigenvalue (relative)", lam1, 1e-10),
        CheckResult("first eigenvector constant", const_dev, 1e-10),
        CheckResult("s-orthonormality", ortho, 1e-10),
        CheckResult("eigenvalues invariant under kappa -> 1e3 kappa", scale, 1e-9),
    ]


def full_space_check(medium_spec: dict, steps: int = 100, tau: float = 1e-4) -> CheckResult:
    """Reduced trajectory with J = all cells and global patches equals the fine one.

    The reduced velocity space is A⁻¹Bᵀ applied to all pressures, so the
    initial velocity is drawn from that range (a divergence-free part would
    stay frozen in the fine model and is invisible to the reduced one).
    """
    g = build_hierarchy(8, 2)
    medium = load_medium(g, medium_spec)
    ops, _ = _operators(g, medium)
    aux = build_auxiliary(g, ops, g.refinement_ratio**2)
    cem = assemble_velocity_space(g, ops, aux, ell=g.n_coarse)
    ms = assemble_reduced(ops, aux, cem)
    fs = fine_system(ops)
    rng = np.random.default_rng(0)
    h_v = gradient_velocity(ops, rng.standard_normal(g.n_cells))
    h_p = rng.standard_normal(g.n_cells)
    src = make_source(g, "example1")
    T = steps * tau
    step_count(T, tau)
    a = simulate(ms, tau, T, src, h_v, h_p, snapshot_times=[T])
    b = simulate(fs, tau, T, src, h_v, h_p, snapshot_times=[T])
    va, pa = a.fine_fields(ms, 0)
    vb, pb = b.fine_fields(fs, 0)
    err = max(np.abs(va - vb).max() / np.abs(vb).max(), np.abs(pa - pb).max() / np.abs(pb).max())
    return CheckResult(f"full-space reduced vs fine trajectory ({steps} steps)", float(err), 1e-9)


def gradient_velocity(ops, q: np.ndarray) -> np.ndarray:
    """Edge field solving A v = Bᵀ q on interior edges (zero on the boundary)."""
    inner = ops.grid.interior_edges
    v = np.zeros(ops.grid.n_edges)
    v[inner] = spla.spsolve(ops.A[inner][:, inner].tocsc(), ops.B[:, inner].T @ q)
    return v


def energy_check(medium_spec: dict, steps: int = 2000, tau: float = 1e-4) -> CheckResult:
    g = build_hierarchy(16, 4)
    medium = load_medium(g, medium_spec)
    ops, _ = _operators(g, medium)
    aux = build_auxiliary(g, ops, 3)
    cem = assemble_velocity_space(g, ops, aux, ell=1)
    sys = assemble_reduced(ops, aux, cem)
    rng = np.random.default_rng(1)
    h_v = np.where(g.boundary_edge_mask, 0.0, rng.standard_normal(g.n_edges))
    h_p = rng.standard_normal(g.n_cells)
    tr = simulate(sys, tau, steps * tau, None, h_v, h_p, monitor_energy=True)
    E = tr.staggered
    return CheckResult(f"staggered energy drift ({steps} steps)", float(np.abs(E - E[0]).max() / abs(E[0])), 1e-10)


def run_checks(medium_spec: dict, n_fine: int = 16, n_coarse: int = 4, J: int = 3) -> list[CheckResult]:
    g = build_hierarchy(n_fine, n_coarse)
    medium = load_medium(g, medium_spec)
    uniform = MediumFields.uniform(g)
    results = pou_checks(g, medium)
    _, pou_u = _operators(g, uniform)
    xy = g.vertex_coords()
    hats = np.vstack([_bilinear_hat(g, j, xy) for j in range(g.n_interior_nodes)])
    results.append(CheckResult("kappa = 1 gives bilinear hats", float(np.abs(pou_u.chi.toarray() - hats).max()), 1e-10))
    results += spectral_checks(g, medium, J)
    results.append(full_space_check(medium_spec))
    results.append(energy_check(medium_spec))
    return results


def _bilinear_hat(g, j: int, xy: np.ndarray) -> np.ndarray:
    kx, ky = g.interior_node(j)
    wx = np.clip(1 - np.abs(xy[:, 0] / g.H - kx), 0, None)
    wy = np.clip(1 - np.abs(xy[:, 1] / g.H - ky), 0, None)
    return wx * wy
