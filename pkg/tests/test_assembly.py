"""Fine operators against per-cell quadrature oracles with independently coded basis functions."""
import numpy as np
import pytest

from cemwave.assembly import (
    MediumFields,
    assemble_div,
    assemble_fine_operators,
    assemble_nodal_stiffness,
    assemble_pressure_mass,
    assemble_velocity_mass,
    element_stiffness,
)
from cemwave.errors import DomainError, SingularSystemError
from cemwave.grid import build_hierarchy

GAUSS = np.array([-1.0, 1.0]) / np.sqrt(3.0)


def gauss_points(x0, y0, h):
    xs = x0 + h * (1 + GAUSS) / 2
    ys = y0 + h * (1 + GAUSS) / 2
    X, Y = np.meshgrid(xs, ys)
    return X.ravel(), Y.ravel(), np.full(4, h * h / 4)


def rt0_basis(n, ix, iy, x, y):
    """Unit-flux RT0 functions of cell (ix, iy): list of (edge id, (vx, vy) at points)."""
    h = 1.0 / n
    x0, y0 = ix * h, iy * h
    zero = np.zeros_like(x)
    vert = lambda i, j: j * (n + 1) + i  # noqa: E731
    horiz = lambda i, j: n * (n + 1) + j * n + i  # noqa: E731
    return [
        (vert(ix, iy), ((x0 + h - x) / h**2, zero)),
        (vert(ix + 1, iy), ((x - x0) / h**2, zero)),
        (horiz(ix, iy), (zero, (y0 + h - y) / h**2)),
        (horiz(ix, iy + 1), (zero, (y - y0) / h**2)),
    ]


def velocity_mass_oracle(n, kappa):
    A = np.zeros((2 * n * (n + 1),) * 2)
    for iy in range(n):
        for ix in range(n):
            x, y, w = gauss_points(ix / n, iy / n, 1.0 / n)
            basis = rt0_basis(n, ix, iy, x, y)
            for e, (ex, ey) in basis:
                for f, (fx, fy) in basis:
                    A[e, f] += np.sum(w * (ex * fx + ey * fy)) / kappa[iy * n + ix]
    return A


def div_oracle(n):
    """∫_c div φ_e via the divergence theorem: outward flux of φ_e through ∂c."""
    B = np.zeros((n * n, 2 * n * (n + 1)))
    for iy in range(n):
        for ix in range(n):
            for k, (e, _) in enumerate(rt0_basis(n, ix, iy, np.zeros(1), np.zeros(1))):
                # unit normals point in +x / +y; left and bottom edges point into the cell
                B[iy * n + ix, e] = -1.0 if k in (0, 2) else 1.0
    return B


def nodal_stiffness_oracle(n, kappa):
    K = np.zeros(((n + 1) ** 2,) * 2)
    h = 1.0 / n
    for iy in range(n):
        for ix in range(n):
            x, y, w = gauss_points(ix * h, iy * h, h)
            s, t = (x - ix * h) / h, (y - iy * h) / h
            grads = [
                (-(1 - t) / h, -(1 - s) / h),
                ((1 - t) / h, -s / h),
                (-t / h, (1 - s) / h),
                (t / h, s / h),
            ]
            v00 = iy * (n + 1) + ix
            nodes = [v00, v00 + 1, v00 + n + 1, v00 + n + 2]
            for a in range(4):
                for b in range(4):
                    K[nodes[a], nodes[b]] += kappa[iy * n + ix] * np.sum(
                        w * (grads[a][0] * grads[b][0] + grads[a][1] * grads[b][1])
                    )
    return K


def test_single_cell_velocity_mass_is_interval_mass():
    A = velocity_mass_oracle(1, np.ones(1))
    mass_1d = np.array([[1 / 3, 1 / 6], [1 / 6, 1 / 3]])
    assert np.allclose(A[np.ix_([0, 1], [0, 1])], mass_1d, atol=1e-14)
    assert np.allclose(A[np.ix_([2, 3], [2, 3])], mass_1d, atol=1e-14)
    assert np.allclose(A[np.ix_([0, 1], [2, 3])], 0, atol=1e-14)


@pytest.mark.parametrize("n", [2, 4, 8])
def test_velocity_mass_matches_quadrature(n):
    rng = np.random.default_rng(n)
    kappa = np.where(rng.random(n * n) < 0.5, 1.0, 1e4)
    g = build_hierarchy(n, 2)
    A = assemble_velocity_mass(g, MediumFields(kappa, np.ones(n * n))).toarray()
    assert np.abs(A - velocity_mass_oracle(n, kappa)).max() <= 1e-12 * np.abs(A).max()


def test_checkerboard_velocity_mass():
    kappa = np.array([1.0, 1e4, 1e4, 1.0])
    g = build_hierarchy(2, 2)
    A = assemble_velocity_mass(g, MediumFields(kappa, np.ones(4))).toarray()
    assert np.allclose(A, velocity_mass_oracle(2, kappa), rtol=0, atol=1e-12)


def test_velocity_mass_scaling_and_positivity():
    g = build_hierarchy(8, 2)
    rng = np.random.default_rng(0)
    kappa = 10 ** rng.uniform(-2, 4, g.n_cells)
    m = MediumFields(kappa, np.ones(g.n_cells))
    A = assemble_velocity_mass(g, m)
    A3 = assemble_velocity_mass(g, m.scaled(7.0))
    assert np.allclose(A3.toarray(), A.toarray() / 7.0, rtol=1e-14, atol=0)
    assert abs(A - A.T).max() == 0
    assert np.diff(A.indptr).max() <= 7
    inner = g.interior_edges
    Ai = A[inner][:, inner]
    for _ in range(5):
        v = rng.standard_normal(inner.size)
        assert v @ (Ai @ v) > 0


def test_div_matches_oracle_and_single_cell_signs():
    for n in (2, 4, 8):
        g = build_hierarchy(n, 2)
        assert np.array_equal(assemble_div(g).toarray(), div_oracle(n))
    B1 = div_oracle(1)
    # left, right, bottom, top
    assert B1[0].tolist() == [-1.0, 1.0, -1.0, 1.0]


def test_div_properties():
    g = build_hierarchy(8, 4)
    B = assemble_div(g).tocsc()
    Bi = B[:, g.interior_edges]
    assert np.abs(np.ones(g.n_cells) @ Bi).max() == 0
    for e in g.interior_edges[:20]:
        col = B[:, e].toarray().ravel()
        nz = col[col != 0]
        assert nz.size == 2 and nz.sum() == 0


def test_pressure_mass():
    g = build_hierarchy(2, 2)
    assert np.allclose(assemble_pressure_mass(g, np.ones(4)).diagonal(), 0.25)
    ops = assemble_fine_operators(g, MediumFields.uniform(g))
    assert np.array_equal(ops.M_rho.toarray(), ops.M_plain.toarray())
    with pytest.raises(DomainError):
        assemble_pressure_mass(g, np.array([1.0, 0.0, 1.0, 1.0]))


def test_medium_validation_names_cell():
    kappa = np.ones(16)
    kappa[5] = -1.0
    with pytest.raises(DomainError, match="5"):
        MediumFields(kappa, np.ones(16))


def test_element_stiffness_single_cell():
    K = element_stiffness(1.0, 1.0)
    assert np.allclose(K, nodal_stiffness_oracle(1, np.ones(1)), atol=1e-14)
    assert np.allclose(K.sum(axis=1), 0, atol=1e-14)
    assert np.allclose(element_stiffness(0.5, 0.5, 3.0), 3.0 * element_stiffness(0.5, 0.5))


@pytest.mark.parametrize("n", [2, 4])
def test_nodal_stiffness_matches_quadrature(n):
    g = build_hierarchy(n, 2)
    rng = np.random.default_rng(1)
    kappa = 10 ** rng.uniform(0, 4, g.n_cells)
    dirichlet = np.array([0])
    system = assemble_nodal_stiffness(g, kappa, np.arange(g.n_cells), dirichlet)
    oracle = nodal_stiffness_oracle(n, kappa)
    K = system.K.toarray()
    assert np.abs(K - oracle[np.ix_(system.nodes, system.nodes)]).max() <= 1e-12 * np.abs(oracle).max()
    scaled = assemble_nodal_stiffness(g, 5 * kappa, np.arange(g.n_cells), dirichlet)
    assert np.allclose(scaled.K.toarray(), 5 * K, rtol=1e-14)


def test_nodal_solve_reproduces_linear_data():
    g = build_hierarchy(4, 2)
    coords = g.vertex_coords()
    nodes = np.arange(g.n_vertices)
    bd = nodes[np.isclose(coords, 0).any(axis=1) | np.isclose(coords, 1).any(axis=1)]
    system = assemble_nodal_stiffness(g, np.ones(g.n_cells), np.arange(g.n_cells), bd)
    exact = 2 * coords[:, 0] - coords[:, 1]
    u = system.solve(exact[system.nodes[system.dirichlet]])
    assert np.allclose(u, exact[system.nodes], atol=1e-13)


def test_nodal_errors():
    g = build_hierarchy(4, 2)
    with pytest.raises(SingularSystemError):
        assemble_nodal_stiffness(g, np.ones(g.n_cells), np.arange(4), np.array([], dtype=int))
    with pytest.raises(DomainError):
        assemble_nodal_stiffness(g, np.ones(g.n_cells), np.array([], dtype=int), np.array([0]))
