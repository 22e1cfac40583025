import csv
import math

import numpy as np
import pytest

from cemwave.assembly import MediumFields, assemble_fine_operators
from cemwave.errors import ConfigurationError
from cemwave.grid import build_hierarchy
from cemwave.pou import attach_weight, solve_pou
from cemwave.spectral import build_auxiliary, project_pi, solve_local_spectral, write_eigenvalue_csv
from oracles import local_blocks, saddle_oracle, schur_oracle


def setup(nf, nc, seed=0, scale=1.0):
    g = build_hierarchy(nf, nc)
    rng = np.random.default_rng(seed)
    m = MediumFields(scale * 10 ** rng.uniform(0, 4, g.n_cells), np.ones(g.n_cells))
    ops = assemble_fine_operators(g, m)
    attach_weight(ops, solve_pou(g, m))
    return g, ops


@pytest.mark.parametrize("nf, nc", [(4, 2), (6, 2), (12, 3)])
def test_eigenvalues_match_dense_oracles(nf, nc):
    g, ops = setup(nf, nc)
    dim = g.refinement_ratio**2
    J = dim - 1
    for i in range(g.n_elements):
        spec = solve_local_spectral(g, ops, i, J)
        A, B, s = local_blocks(g, ops, i)
        lam_saddle, _ = saddle_oracle(A, B, s)
        lam_schur, vec = schur_oracle(A, B, s)
        assert lam_saddle.size == dim
        scale = max(1.0, lam_schur.max())
        assert np.abs(spec.eigenvalues - lam_schur[: J + 1]).max() <= 1e-10 * scale
        assert np.abs(spec.eigenvalues - lam_saddle[: J + 1]).max() <= 1e-8 * scale
        # simple eigenvalues: eigenvectors agree up to sign
        for k in range(1, J + 1):
            gaps = np.abs(lam_schur - lam_schur[k])
            gaps[k] = np.inf
            if gaps.min() > 1e-6 * scale:
                overlap = spec.vectors[:, k] @ (s * vec[:, k])
                assert abs(abs(overlap) - 1) <= 1e-9


def test_first_pair_is_zero_and_constant():
    g, ops = setup(16, 4, seed=3)
    for i in range(g.n_elements):
        spec = solve_local_spectral(g, ops, i, 3)
        assert abs(spec.eigenvalues[0]) <= 1e-10
        v = spec.vectors[:, 0]
        assert np.ptp(v) <= 1e-10 * abs(v).max()
        assert (v > 0).all()


def test_s_orthonormal_and_sorted():
    g, ops = setup(16, 4, seed=4)
    for i in range(g.n_elements):
        spec = solve_local_spectral(g, ops, i, 5)
        s = ops.s_diag[spec.cells]
        G = spec.vectors.T @ (s[:, None] * spec.vectors)
        assert np.abs(G - np.eye(6)).max() <= 1e-10
        assert np.all(np.diff(spec.eigenvalues) >= 0)


@pytest.mark.parametrize("c", [1e-3, 1e3])
def test_eigenvalues_scale_invariant(c):
    g, ops = setup(16, 4, seed=5)
    _, ops_c = setup(16, 4, seed=5, scale=c)
    for i in range(g.n_elements):
        a = solve_local_spectral(g, ops, i, 4).eigenvalues
        b = solve_local_spectral(g, ops_c, i, 4).eigenvalues
        assert np.abs(a - b).max() <= 1e-9 * max(1.0, np.abs(a).max())


def test_auxiliary_space_structure():
    g, ops = setup(12, 3, seed=6)
    aux = build_auxiliary(g, ops, 3)
    assert aux.M == 3 * g.n_elements
    G = (aux.P.T @ (aux.s_diag[:, None] * aux.P.toarray()))
    assert np.abs(G - np.eye(aux.M)).max() <= 1e-10
    for col in range(aux.M):
        rows = aux.P[:, col].nonzero()[0]
        assert set(g.cell_element[rows]) == {aux.column_element[col]}
    assert aux.Lambda == pytest.approx(min(b.eigenvalues[3] for b in aux.blocks))


def test_projection_idempotent():
    g, ops = setup(12, 3, seed=7)
    aux = build_auxiliary(g, ops, 2)
    q = np.random.default_rng(0).standard_normal(g.n_cells)
    once = project_pi(q, aux)
    assert np.allclose(project_pi(once, aux), once, atol=1e-12 * np.abs(once).max())
    # the residual is s-orthogonal to the space
    assert np.abs(aux.P.T @ (aux.s_diag * (q - once))).max() <= 1e-10


def test_full_local_space_has_infinite_lambda():
    g, ops = setup(4, 2)
    aux = build_auxiliary(g, ops, 4)
    assert math.isinf(aux.Lambda)
    q = np.random.default_rng(1).standard_normal(g.n_cells)
    assert np.allclose(project_pi(q, aux), q)


@pytest.mark.parametrize("J", [0, 5])
def test_invalid_J(J):
    g, ops = setup(4, 2)
    with pytest.raises(ConfigurationError):
        solve_local_spectral(g, ops, 0, J)


def test_eigenvalue_csv(tmp_path):
    g, ops = setup(8, 2)
    aux = build_auxiliary(g, ops, 2)
    path = tmp_path / "eig.csv"
    write_eigenvalue_csv(aux, path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["element", "lambda_1", "lambda_2", "lambda_3"]
    assert len(rows) == 1 + g.n_elements
    assert float(rows[1][2]) == aux.blocks[0].eigenvalues[1]
