import math

import numpy as np
import pytest
import scipy.sparse as sp

from cemwave.assembly import MediumFields, assemble_fine_operators
from cemwave.cem import assemble_velocity_space
from cemwave.dynamics import (
    ReducedSystem,
    SeparableSource,
    StabilityError,
    WaveState,
    assemble_reduced,
    check_cfl,
    fine_system,
    leapfrog_step,
    project_initial,
    simulate,
    source_vector,
    step_count,
)
from cemwave.errors import ConfigurationError, DivergenceError
from cemwave.grid import build_hierarchy
from cemwave.lab.fieldfile import generate_kappa
from cemwave.lab.sources import source_example1
from cemwave.linalg import SpdSolver
from cemwave.pou import attach_weight, solve_pou
from cemwave.spectral import build_auxiliary
from oracles import dense_leapfrog


def build(nf, nc, J, ell, seed=0, contrast=True):
    g = build_hierarchy(nf, nc)
    kappa = generate_kappa(g.cell_centers(), seed=seed) if contrast else np.ones(g.n_cells)
    m = MediumFields(kappa, np.ones(g.n_cells))
    ops = assemble_fine_operators(g, m)
    attach_weight(ops, solve_pou(g, m))
    aux = build_auxiliary(g, ops, J)
    cem = assemble_velocity_space(g, ops, aux, ell)
    return g, ops, assemble_reduced(ops, aux, cem)


def random_data(g, seed=0):
    rng = np.random.default_rng(seed)
    h_v = np.where(g.boundary_edge_mask, 0.0, rng.standard_normal(g.n_edges))
    return h_v, rng.standard_normal(g.n_cells)


def scalar_system(r):
    one = np.ones((1, 1))
    eye = sp.identity(1, format="csr")
    return ReducedSystem(
        M_v=one, M_p=one, R=r * one, Psi=eye, P=eye, source_projector=eye,
        solve_v=SpdSolver(one), solve_p=SpdSolver(one), ops=None, kind="scalar",
    )


@pytest.mark.parametrize("nf, nc, J", [(4, 2, 1), (4, 2, 3), (8, 4, 2)])
def test_leapfrog_matches_dense_oracle(nf, nc, J):
    g, ops, sys = build(nf, nc, J, ell=1)
    tau, steps = 1e-4, 10
    h_v, h_p = random_data(g)
    f = source_example1(g.cell_centers())
    src = SeparableSource(f, lambda t: math.cos(7 * t))

    oracle = dense_leapfrog(ops, sys.Psi.toarray(), sys.P.toarray(), h_v, h_p, tau, steps, f, src.profile)

    times = [k * tau for k in range(1, steps + 1)]
    tr = simulate(sys, tau, steps * tau, src, h_v, h_p, snapshot_times=times)
    for k, (vo, po) in enumerate(oracle):
        vk, pk = tr.fine_fields(sys, k)
        assert np.abs(vk - vo).max() <= 1e-10 * max(1.0, np.abs(vo).max())
        assert np.abs(pk - po).max() <= 1e-10 * max(1.0, np.abs(po).max())


def test_single_step_formula():
    g, ops, sys = build(8, 4, 2, ell=1)
    rng = np.random.default_rng(3)
    st = project_initial(*random_data(g, 3), sys, 1e-4)
    nxt = leapfrog_step(st, sys)
    assert np.allclose(nxt.v, st.v + 1e-4 * sys.solve_v.solve(sys.R @ st.p), rtol=1e-13, atol=1e-14)
    assert np.array_equal(nxt.p_prev, st.p)
    f = rng.standard_normal(sys.n_pressure)
    nxt_f = leapfrog_step(st, sys, f)
    assert np.allclose(nxt_f.p - nxt.p, 1e-4 * sys.solve_p.solve(f), rtol=1e-12, atol=1e-16)


@pytest.mark.parametrize("r", [0.5, 3.0, 40.0])
def test_cfl_scalar_oscillator(r):
    rep = check_cfl(scalar_system(r), 1e-3)
    assert rep.tau_max == pytest.approx(2 / r, rel=1e-12)
    assert check_cfl(scalar_system(r), 10 * rep.tau_max).ok is False


def test_unstable_step_rejected_and_diverges():
    sys = scalar_system(2.0)
    tau = 10.0  # tau_max = 1
    start = WaveState(v=np.ones(1), p=np.ones(1), p_prev=np.ones(1), n=0, tau=tau)
    with pytest.raises(StabilityError, match="tau_max"):
        simulate(sys, tau, 10 * tau, initial_state=start)
    with pytest.raises(DivergenceError, match="step"), np.errstate(over="ignore", invalid="ignore"):
        simulate(sys, tau, 1000 * tau, initial_state=start, check_stability=False)


def test_cfl_on_reduced_system():
    g, ops, sys = build(16, 4, 3, ell=1)
    rep = check_cfl(sys, 1e-4)
    assert rep.converged and rep.ok
    assert not check_cfl(sys, 10 * rep.tau_max).ok
    # power iteration estimate against the dense generalized eigenproblem
    import scipy.linalg as sla

    Mv, Mp, R = (np.asarray(x) if not sp.issparse(x) else x.toarray() for x in (sys.M_v, sys.M_p, sys.R))
    lam = sla.eigh(R @ np.linalg.solve(Mp, R.T), Mv, eigvals_only=True).max()
    assert rep.lambda_max == pytest.approx(lam, rel=1e-5)


def test_projection_reproduces_space_members():
    g, ops, sys = build(16, 4, 2, ell=2)
    rng = np.random.default_rng(1)
    c, d = rng.standard_normal(sys.M), rng.standard_normal(sys.n_pressure)
    st = project_initial(sys.Psi @ c, sys.P @ d, sys, 1e-4)
    assert np.allclose(st.v, c, atol=1e-9 * np.abs(c).max())
    assert np.allclose(st.p, d, atol=1e-12)


def test_linearity():
    g, ops, sys = build(16, 4, 2, ell=1)
    x, y = random_data(g, 1), random_data(g, 2)
    a, b = 2.5, -0.75
    T = 50e-4
    run = lambda hv, hp: simulate(sys, 1e-4, T, None, hv, hp, snapshot_times=[T]).fine_fields(sys, 0)  # noqa: E731
    vx, px = run(*x)
    vy, py = run(*y)
    vz, pz = run(a * x[0] + b * y[0], a * x[1] + b * y[1])
    assert np.allclose(vz, a * vx + b * vy, atol=1e-10 * np.abs(vz).max())
    assert np.allclose(pz, a * px + b * py, atol=1e-10 * np.abs(pz).max())


def test_staggered_energy_exact_and_plain_energy_second_order():
    g, ops, sys = build(16, 4, 3, ell=1)
    h_v, h_p = random_data(g, 4)
    tau, T = 1e-4, 1.0
    tr = simulate(sys, tau, T, None, h_v, h_p, monitor_energy=True)
    E = tr.staggered
    assert np.abs(E - E[0]).max() <= 1e-10 * E[0]
    drift = lambda e: np.abs(e - e[0]).max() / e[0]  # noqa: E731
    coarse = drift(tr.energy)
    fine = drift(simulate(sys, tau / 4, T, None, h_v, h_p, monitor_energy=True).energy)
    assert coarse <= 1e-3
    assert 12 <= coarse / fine <= 20


def test_full_space_equals_fine_trajectory():
    g, ops, sys = build(8, 2, 16, ell=1)
    fs = fine_system(ops)
    _, h_p = random_data(g, 5)
    src = SeparableSource(source_example1(g.cell_centers()))
    T = 100e-4
    a = simulate(sys, 1e-4, T, src, None, h_p, snapshot_times=[T])
    b = simulate(fs, 1e-4, T, src, None, h_p, snapshot_times=[T])
    for x, y in zip(a.fine_fields(sys, 0), b.fine_fields(fs, 0)):
        assert np.abs(x - y).max() <= 1e-9 * np.abs(y).max()


def test_source_vector_and_rules():
    g, ops, sys = build(8, 4, 2, ell=1)
    assert source_vector(sys, None) is None
    f = source_example1(g.cell_centers())
    assert np.allclose(source_vector(sys, SeparableSource(f)), sys.P.T @ (f * g.h**2))
    with pytest.raises(ConfigurationError):
        simulate(sys, 1e-4, 1e-3, SeparableSource(f), source_rule="midpoint")
    avg = simulate(sys, 1e-4, 1e-3, SeparableSource(f, lambda t: t), source_rule="average", snapshot_times=[1e-3])
    pt = simulate(sys, 1e-4, 1e-3, SeparableSource(f, lambda t: t), source_rule="point", snapshot_times=[1e-3])
    # a linear profile has identical point and averaged values
    assert np.allclose(avg.p[0], pt.p[0], rtol=1e-12, atol=1e-18)


@pytest.mark.parametrize("T, tau", [(0.4, 3e-4), (1.0, 0.0), (0.1, -1e-3)])
def test_step_count_errors(T, tau):
    with pytest.raises(ConfigurationError):
        step_count(T, tau)


def test_step_count_and_snapshot_checks():
    assert step_count(0.4, 1e-4) == 4000
    sys = scalar_system(1.0)
    with pytest.raises(ConfigurationError):
        simulate(sys, 0.1, 1.0, snapshot_times=[1.5])
    with pytest.raises(ConfigurationError):
        simulate(sys, 0.1, 1.0, snapshot_times=[0.25])
