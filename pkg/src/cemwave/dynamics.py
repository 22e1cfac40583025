"""Reduced/fine semi-discrete systems and staggered leapfrog time stepping.

Both the multiscale and the fine reference model are written as

    M_v v' − R p = 0,     M_p p' + Rᵀ v = f,

with velocity coefficients on integer time levels and pressure coefficients
on half levels. For the multiscale model M_v = ΨᵀAΨ, M_p = PᵀWP and
R = ΨᵀBᵀP, i.e. R[i, j] = b(ψ_i, p_j). The fine model is the same system
with Ψ selecting interior edges and P the identity on cells.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import FineOperators
from .cem import CemVelocityBasis, constant_pressure_direction
from .errors import ConfigurationError, DivergenceError, RankDeficiencyError
from .linalg import DENSE_LIMIT, SpdSolver
from .spectral import AuxiliarySpace

log = logging.getLogger(__name__)


class StabilityError(ConfigurationError):
    """Time step above the leapfrog stability limit."""


@dataclass
class ReducedSystem:
    M_v: object
    M_p: object
    R: object
    Psi: sp.csr_matrix  # coefficients -> fine edge fluxes
    P: sp.csr_matrix  # coefficients -> fine cell values
    source_projector: sp.csr_matrix  # cell field f -> ((f, p_i))_i
    solve_v: SpdSolver = field(repr=False)
    solve_p: SpdSolver = field(repr=False)
    ops: FineOperators = field(repr=False)
    kind: str = "multiscale"

    @property
    def M(self) -> int:
        return self.M_v.shape[0]

    @property
    def n_pressure(self) -> int:
        return self.M_p.shape[0]


def _maybe_dense(mat, dense_limit: int):
    if sp.issparse(mat) and max(mat.shape) <= dense_limit:
        return mat.toarray()
    return mat


def _check_symmetric(mat, name: str) -> None:
    diff = mat - mat.T
    scale = abs(mat).max() if sp.issparse(mat) else np.abs(mat).max()
    asym = abs(diff).max() if sp.issparse(diff) else np.abs(diff).max()
    if asym > 1e-12 * max(scale, 1e-300):
        raise RankDeficiencyError(f"{name} is not symmetric (asymmetry {asym:.2e})")


def assemble_reduced(
    ops: FineOperators,
    aux: AuxiliarySpace,
    cem: CemVelocityBasis,
    pressure_weight: str = "rho",
    dense_limit: int = DENSE_LIMIT,
) -> ReducedSystem:
    if cem.M != aux.M:
        raise ConfigurationError(f"velocity basis has {cem.M} columns, pressure basis {aux.M}")
    if pressure_weight not in ("rho", "plain"):
        raise ConfigurationError(f"pressure_weight must be 'rho' or 'plain', got {pressure_weight!r}")
    W = ops.M_rho if pressure_weight == "rho" else ops.M_plain
    Psi, P = cem.Psi.tocsr(), aux.P.tocsr()
    M_v = (Psi.T @ ops.A @ Psi).tocsr()
    M_v = 0.5 * (M_v + M_v.T)
    M_p = (P.T @ W @ P).tocsr()
    M_p = 0.5 * (M_p + M_p.T)
    R = (Psi.T @ ops.B.T @ P).tocsr()
    null = constant_pressure_direction(aux) if cem.constant_mode else None
    solve_v = SpdSolver(M_v, null_vector=null, dense_limit=dense_limit, label="M_v")
    solve_p = SpdSolver(M_p, dense_limit=dense_limit, label="M_p")
    return ReducedSystem(
        M_v=_maybe_dense(M_v, dense_limit),
        M_p=_maybe_dense(M_p, dense_limit),
        R=_maybe_dense(R, dense_limit),
        Psi=Psi,
        P=P,
        source_projector=(P.T @ ops.M_plain).tocsr(),
        solve_v=solve_v,
        solve_p=solve_p,
        ops=ops,
    )


def fine_system(ops: FineOperators, pressure_weight: str = "rho") -> ReducedSystem:
    """The full RT0 x P0 model in the same form (velocity DOFs = interior edges)."""
    g = ops.grid
    interior = g.interior_edges
    Psi = sp.csr_matrix((np.ones(interior.size), (interior, np.arange(interior.size))), shape=(g.n_edges, interior.size))
    P = sp.identity(g.n_cells, format="csr")
    W = ops.M_rho if pressure_weight == "rho" else ops.M_plain
    M_v = ops.A[interior][:, interior].tocsr()
    R = ops.B[:, interior].T.tocsr()
    return ReducedSystem(
        M_v=M_v,
        M_p=W.tocsr(),
        R=R,
        Psi=Psi,
        P=P,
        source_projector=ops.M_plain.tocsr(),
        solve_v=SpdSolver(M_v, dense_limit=0, label="fine velocity mass"),
        solve_p=SpdSolver(W, dense_limit=0, label="fine pressure mass"),
        ops=ops,
        kind="fine",
    )


@dataclass
class WaveState:
    """Staggered state: ``v`` at t_n, ``p`` at t_{n+1/2}, ``p_prev`` at t_{n-1/2}."""

    v: np.ndarray
    p: np.ndarray
    p_prev: np.ndarray
    n: int
    tau: float

    @property
    def t(self) -> float:
        return self.n * self.tau

    @property
    def p_centered(self) -> np.ndarray:
        """Pressure interpolated to t_n."""
        return 0.5 * (self.p + self.p_prev)


@dataclass(frozen=True)
class SeparableSource:
    """f(x, t) = profile(t) * field(x), with ``field`` given per fine cell."""

    field: np.ndarray
    profile: Callable[[float], float] = lambda t: 1.0


def source_vector(sys: ReducedSystem, source: SeparableSource | None):
    """Spatial part ``((field, p_i))_i``, or None for a zero source."""
    if source is None:
        return None
    return sys.source_projector @ np.asarray(source.field, dtype=float)


def project_initial(h_v, h_p, sys: ReducedSystem, tau: float, f0=None) -> WaveState:
    """a-projection of ``h_v`` and ρ-projection of ``h_p`` onto the trial spaces.

    ``p_prev`` (level -1/2) is recovered by running the pressure update
    backwards once, with ``f0`` the load vector at t_0.
    """
    ops = sys.ops
    v0 = sys.solve_v.solve(sys.Psi.T @ (ops.A @ np.asarray(h_v, dtype=float)))
    p_half = sys.solve_p.solve(sys.P.T @ (ops.M_rho @ np.asarray(h_p, dtype=float)))
    rhs = -(sys.R.T @ v0)
    if f0 is not None:
        rhs = rhs + f0
    p_prev = p_half - tau * sys.solve_p.solve(rhs)
    return WaveState(v=v0, p=p_half, p_prev=p_prev, n=0, tau=tau)


def leapfrog_step(state: WaveState, sys: ReducedSystem, f_next=None) -> WaveState:
    """One step of the staggered scheme; ``f_next`` is the load vector at t_{n+1}."""
    tau = state.tau
    v = state.v + tau * sys.solve_v.solve(sys.R @ state.p)
    rhs = -(sys.R.T @ v)
    if f_next is not None:
        rhs = rhs + f_next
    p = state.p + tau * sys.solve_p.solve(rhs)
    if not (np.isfinite(v).all() and np.isfinite(p).all()):
        raise DivergenceError(f"non-finite state at step {state.n + 1} (stability limit exceeded?)")
    return WaveState(v=v, p=p, p_prev=state.p, n=state.n + 1, tau=tau)


class _Stepper:
    """Leapfrog with the load direction and, for dense systems, M_v⁻¹R and M_p⁻¹Rᵀ precomputed."""

    def __init__(self, sys: ReducedSystem, f_space):
        self.sys = sys
        self.f_space = f_space
        self.dense = sys.solve_v.dense and sys.solve_p.dense and not sp.issparse(sys.R)
        if self.dense:
            R = np.asarray(sys.R)
            self.Gv = sys.solve_v.solve(R)
            self.Gp = sys.solve_p.solve(R.T)
        self.g_f = None if f_space is None else sys.solve_p.solve(f_space)

    def step(self, state: WaveState, weight) -> WaveState:
        if not self.dense:
            f_next = None if weight is None else weight * self.f_space
            return leapfrog_step(state, self.sys, f_next)
        tau = state.tau
        v = state.v + tau * (self.Gv @ state.p)
        dp = -(self.Gp @ v)
        if weight is not None:
            dp += weight * self.g_f
        p = state.p + tau * dp
        if not (np.isfinite(v).all() and np.isfinite(p).all()):
            raise DivergenceError(f"non-finite state at step {state.n + 1} (stability limit exceeded?)")
        return WaveState(v=v, p=p, p_prev=state.p, n=state.n + 1, tau=tau)


@dataclass(frozen=True)
class CflReport:
    ok: bool
    tau_max: float
    lambda_max: float
    converged: bool
    iterations: int


def check_cfl(sys: ReducedSystem, tau: float, tol: float = 1e-6, maxiter: int = 500, seed: int = 0) -> CflReport:
    """Power iteration for λ_max of M_v⁻¹ R M_p⁻¹ Rᵀ; leapfrog is stable for τ < 2/√λ_max."""
    rng = np.random.default_rng(seed)
    x = sys.solve_v.solve(rng.standard_normal(sys.M))
    lam_old = 0.0
    lam = 0.0
    for k in range(1, maxiter + 1):
        Mx = sys.M_v @ x
        nrm = math.sqrt(max(float(x @ Mx), 1e-300))
        x = x / nrm
        Mx = Mx / nrm
        Rtx = sys.R.T @ x
        lam = float(Rtx @ sys.solve_p.solve(Rtx))  # Rayleigh quotient in the M_v inner product
        if lam <= 0:
            return CflReport(True, math.inf, 0.0, True, k)
        if k > 1 and abs(lam - lam_old) <= tol * lam:
            tau_max = 2.0 / math.sqrt(lam)
            return CflReport(tau <= tau_max, tau_max, lam, True, k)
        lam_old = lam
        x = sys.solve_v.solve(sys.R @ sys.solve_p.solve(Rtx))
    lanczos = _lanczos_lambda_max(sys, tol)
    if lanczos is None:
        log.warning("CFL power iteration did not converge in %d iterations; stability check skipped", maxiter)
        tau_max = 2.0 / math.sqrt(lam) if lam > 0 else math.inf
        return CflReport(True, tau_max, lam, False, maxiter)
    tau_max = 2.0 / math.sqrt(lanczos)
    return CflReport(tau <= tau_max, tau_max, lanczos, True, maxiter)


def _lanczos_lambda_max(sys: ReducedSystem, tol: float) -> float | None:
    """Fallback for clustered spectra: ARPACK on (R M_p⁻¹ Rᵀ) x = λ M_v x."""
    n = sys.M
    op = spla.LinearOperator((n, n), matvec=lambda x: sys.R @ sys.solve_p.solve(sys.R.T @ x), dtype=float)
    mv = spla.LinearOperator((n, n), matvec=lambda x: sys.M_v @ x, dtype=float)
    minv = spla.LinearOperator((n, n), matvec=sys.solve_v.solve, dtype=float)
    try:
        w = spla.eigsh(op, k=1, M=mv, Minv=minv, which="LA", tol=tol, return_eigenvectors=False)
    except (spla.ArpackNoConvergence, ValueError) as exc:
        log.debug("Lanczos fallback failed: %s", exc)
        return None
    return float(w[0])


def discrete_energy(state: WaveState, sys: ReducedSystem) -> float:
    """‖v‖_a² + ‖p‖_ρ² at t_n, with the pressure interpolated to t_n."""
    p = state.p_centered
    return float(state.v @ (sys.M_v @ state.v) + p @ (sys.M_p @ p))


def staggered_energy(state: WaveState, sys: ReducedSystem) -> float:
    """vⁿᵀM_v vⁿ + p^{n-1/2}ᵀM_p p^{n+1/2}; exactly conserved by leapfrog when f = 0."""
    return float(state.v @ (sys.M_v @ state.v) + state.p_prev @ (sys.M_p @ state.p))


def step_count(T: float, tau: float, what: str = "T") -> int:
    if tau <= 0:
        raise ConfigurationError(f"time step must be positive, got {tau}")
    n = round(T / tau)
    if n < 0 or abs(n * tau - T) > 1e-9 * max(abs(T), tau):
        raise ConfigurationError(f"{what}={T} is not an integer multiple of tau={tau}")
    return int(n)


@dataclass
class Trajectory:
    """Snapshots keyed by time: (velocity coefficients at t_n, pressure coefficients at t_n)."""

    times: list[float]
    v: list[np.ndarray]
    p: list[np.ndarray]
    final: WaveState
    energy: np.ndarray | None = None
    staggered: np.ndarray | None = None

    def fine_fields(self, sys: ReducedSystem, k: int) -> tuple[np.ndarray, np.ndarray]:
        """Snapshot ``k`` expanded to fine edge fluxes and cell pressures."""
        return sys.Psi @ self.v[k], sys.P @ self.p[k]


def simulate(
    sys: ReducedSystem,
    tau: float,
    T: float,
    source: SeparableSource | None = None,
    h_v=None,
    h_p=None,
    snapshot_times=(),
    source_rule: str = "point",
    check_stability: bool = True,
    monitor_energy: bool = False,
    initial_state: WaveState | None = None,
) -> Trajectory:
    """Run the leapfrog scheme from t=0 to T.

    ``source_rule="point"`` uses f(t_{n+1}) in the pressure update;
    ``"average"`` uses the mean of f(t_{n+1/2}) and f(t_{n+3/2}).
    """
    if source_rule not in ("point", "average"):
        raise ConfigurationError(f"unknown source_rule {source_rule!r}")
    n_steps = step_count(T, tau)
    snap_steps = {step_count(t, tau, "snapshot time"): t for t in snapshot_times}
    if any(s > n_steps for s in snap_steps):
        raise ConfigurationError(f"snapshot times {sorted(snapshot_times)} exceed T={T}")
    if check_stability:
        rep = check_cfl(sys, tau)
        log.info("%s system: tau=%g, tau_max=%.3e", sys.kind, tau, rep.tau_max)
        if not rep.ok:
            raise StabilityError(f"tau={tau} exceeds the stability limit tau_max={rep.tau_max:.3e} ({sys.kind} system)")

    f_space = source_vector(sys, source)

    def load(t: float):
        if f_space is None:
            return None
        if source_rule == "average":
            return 0.5 * (source.profile(t - 0.5 * tau) + source.profile(t + 0.5 * tau)) * f_space
        return source.profile(t) * f_space

    if initial_state is None:
        zv = np.zeros(sys.Psi.shape[0]) if h_v is None else h_v
        zp = np.zeros(sys.P.shape[0]) if h_p is None else h_p
        state = project_initial(zv, zp, sys, tau, load(0.0))
    else:
        state = initial_state
    times, vs, ps = [], [], []
    energy = np.empty(n_steps + 1) if monitor_energy else None
    staggered = np.empty(n_steps + 1) if monitor_energy else None

    def record(st: WaveState):
        if monitor_energy:
            energy[st.n] = discrete_energy(st, sys)
            staggered[st.n] = staggered_energy(st, sys)
        if st.n in snap_steps:
            times.append(snap_steps[st.n])
            vs.append(st.v.copy())
            ps.append(st.p_centered.copy())

    record(state)
    stepper = _Stepper(sys, f_space)
    for n in range(n_steps):
        t_next = (n + 1) * tau
        if f_space is None:
            weight = None
        elif source_rule == "average":
            weight = 0.5 * (source.profile(t_next - 0.5 * tau) + source.profile(t_next + 0.5 * tau))
        else:
            weight = source.profile(t_next)
        state = stepper.step(state, weight)
        record(state)
    return Trajectory(times, vs, ps, state, energy, staggered)


def run_fine_reference(ops: FineOperators, source, h_v, h_p, tau: float, T: float, snapshot_times=(), **kw) -> Trajectory:
    """Fine RT0 reference trajectory; ``h_v`` is a full fine edge field, ``h_p`` a cell field."""
    return simulate(fine_system(ops), tau, T, source, h_v, h_p, snapshot_times, **kw)
