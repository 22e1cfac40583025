import numpy as np
import pytest

from cemwave.errors import ConfigurationError
from cemwave.grid import build_hierarchy, oversample


@pytest.mark.parametrize(
    "nf, nc, n_el, n_nodes, n_edges",
    [(4, 2, 4, 1, 40), (400, 20, 400, 361, 2 * 400 * 401), (6, 3, 9, 4, 84)],
)
def test_counts(nf, nc, n_el, n_nodes, n_edges):
    g = build_hierarchy(nf, nc)
    assert g.n_elements == n_el
    assert g.n_interior_nodes == n_nodes
    assert g.n_edges == n_edges
    assert g.refinement_ratio == nf // nc


def test_diameters():
    g = build_hierarchy(400, 20)
    assert g.fine_diameter == pytest.approx(np.sqrt(2) / 400)
    assert g.coarse_diameter == pytest.approx(np.sqrt(2) / 20)


def test_each_element_owns_ratio_squared_cells():
    g = build_hierarchy(6, 3)
    owned = [g.element_cells(i) for i in range(g.n_elements)]
    assert all(c.size == 4 for c in owned)
    assert np.array_equal(np.sort(np.concatenate(owned)), np.arange(g.n_cells))


@pytest.mark.parametrize("nf, nc", [(5, 2), (8, 3), (4, 1), (4, 0)])
def test_bad_pairs_rejected(nf, nc):
    with pytest.raises(ConfigurationError) as err:
        build_hierarchy(nf, nc)
    assert str(nf) in str(err.value) and str(nc) in str(err.value)


def test_cell_edges_follow_numbering():
    g = build_hierarchy(4, 2)
    n = 4
    # cell (ix=1, iy=2)
    c = 2 * n + 1
    left, right, bottom, top = g.cell_edges[c]
    assert (left, right) == (2 * (n + 1) + 1, 2 * (n + 1) + 2)
    assert bottom == n * (n + 1) + 2 * n + 1
    assert top == n * (n + 1) + 3 * n + 1
    mid = g.edge_midpoints()
    cx, cy = g.cell_centers()[c]
    h = g.h
    assert np.allclose(mid[left], [cx - h / 2, cy])
    assert np.allclose(mid[top], [cx, cy + h / 2])


def test_boundary_edges():
    g = build_hierarchy(4, 2)
    mid = g.edge_midpoints()
    on_bd = np.isclose(mid, 0).any(axis=1) | np.isclose(mid, 1).any(axis=1)
    assert np.array_equal(g.boundary_edge_mask, on_bd)
    assert g.interior_edges.size == g.n_edges - 4 * 4


def test_interior_node_neighborhood():
    g = build_hierarchy(8, 4)
    j = 4  # node (2, 2), the centre
    assert g.interior_node(j) == (2, 2)
    nbhd = set(g.node_neighborhood(j).tolist())
    assert nbhd == {5, 6, 9, 10}


def test_oversample_interior_and_corner():
    g = build_hierarchy(10, 5)
    centre = 2 * 5 + 2
    assert oversample(g, centre, 1).element_set.size == 9
    assert oversample(g, 0, 1).element_set.size == 4
    assert oversample(g, 0, 5).element_set.size == 25
    assert oversample(g, centre, 0).element_set.tolist() == [centre]


def test_oversample_monotone_and_disjoint_union():
    g = build_hierarchy(12, 4)
    for i in range(g.n_elements):
        prev = set()
        for ell in range(4):
            p = oversample(g, i, ell)
            members = set(p.element_set.tolist())
            assert prev <= members
            prev = members
            union = np.concatenate([g.element_cells(k) for k in p.element_set])
            assert np.array_equal(np.sort(union), np.sort(p.cells))
            assert np.unique(union).size == union.size


def test_patch_interior_edge_count_by_direct_counting():
    g = build_hierarchy(8, 4)
    for i in range(g.n_elements):
        for ell in range(3):
            p = oversample(g, i, ell)
            cells = set(p.cells.tolist())
            all_edges = set(g.cell_edges[p.cells].ravel().tolist())
            # an edge is interior to the patch when both neighbours are patch cells
            inner = {e for e in all_edges if all(c in cells for c in g.edge_cells[e] if c >= 0) and (g.edge_cells[e] >= 0).all()}
            assert set(p.interior_edges.tolist()) == inner
            assert p.interior_edges.size == len(all_edges) - p.boundary_edges.size
