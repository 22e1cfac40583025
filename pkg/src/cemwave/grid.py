"""Structured fine/coarse rectangular grids on the unit square.

Numbering conventions (all lexicographic by ``(y, x)``):

* cell ``(ix, iy)`` -> ``iy * n + ix``
* vertex ``(ix, iy)`` -> ``iy * (n + 1) + ix``
* vertical edge at ``x = ix * h`` spanning row ``iy`` -> ``iy * (n + 1) + ix``;
  its unit normal points in ``+x``
* horizontal edge at ``y = iy * h`` spanning column ``ix`` ->
  ``n * (n + 1) + iy * n + ix``; its unit normal points in ``+y``
* coarse element ``(jx, jy)`` -> ``jy * n_coarse + jx``
* interior coarse node ``(kx, ky)``, ``1 <= kx, ky < n_coarse`` ->
  ``(ky - 1) * (n_coarse - 1) + (kx - 1)``
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import ConfigurationError


@dataclass(frozen=True)
class Patch:
    """A union of coarse elements together with its local fine-scale DOFs.

    ``interior_edges`` are the fine edges whose two neighbouring cells both lie
    in the patch; they carry the velocity DOFs of ``V_{h,0}(patch)``.
    """

    element_set: np.ndarray
    cells: np.ndarray
    edges: np.ndarray
    interior_edges: np.ndarray
    boundary_edges: np.ndarray
    box: tuple[int, int, int, int]  # coarse index ranges jx0, jx1, jy0, jy1 (inclusive)

    def cell_local(self, n_cells_global: int) -> np.ndarray:
        """Global->local cell map (-1 outside the patch)."""
        out = np.full(n_cells_global, -1, dtype=np.int64)
        out[self.cells] = np.arange(self.cells.size)
        return out


@dataclass(frozen=True)
class GridHierarchy:
    n_fine: int
    n_coarse: int
    _patch_cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def refinement_ratio(self) -> int:
        return self.n_fine // self.n_coarse

    @property
    def h(self) -> float:
        """Fine cell side length."""
        return 1.0 / self.n_fine

    @property
    def H(self) -> float:
        """Coarse cell side length."""
        return 1.0 / self.n_coarse

    @property
    def fine_diameter(self) -> float:
        return math.sqrt(2.0) / self.n_fine

    @property
    def coarse_diameter(self) -> float:
        return math.sqrt(2.0) / self.n_coarse

    @property
    def n_cells(self) -> int:
        return self.n_fine * self.n_fine

    @property
    def n_vertical_edges(self) -> int:
        return self.n_fine * (self.n_fine + 1)

    @property
    def n_edges(self) -> int:
        return 2 * self.n_fine * (self.n_fine + 1)

    @property
    def n_vertices(self) -> int:
        return (self.n_fine + 1) ** 2

    @property
    def n_elements(self) -> int:
        return self.n_coarse * self.n_coarse

    @property
    def n_interior_nodes(self) -> int:
        return (self.n_coarse - 1) ** 2

    def cell_centers(self) -> np.ndarray:
        """``(n_cells, 2)`` array of cell-center coordinates."""
        c = (np.arange(self.n_fine) + 0.5) * self.h
        xx, yy = np.meshgrid(c, c)
        return np.column_stack([xx.ravel(), yy.ravel()])

    def vertex_coords(self) -> np.ndarray:
        c = np.arange(self.n_fine + 1) * self.h
        xx, yy = np.meshgrid(c, c)
        return np.column_stack([xx.ravel(), yy.ravel()])

    def edge_midpoints(self) -> np.ndarray:
        n, h = self.n_fine, self.h
        iy, ix = np.divmod(np.arange(self.n_vertical_edges), n + 1)
        vert = np.column_stack([ix * h, (iy + 0.5) * h])
        iy, ix = np.divmod(np.arange(self.n_vertical_edges), n)
        horiz = np.column_stack([(ix + 0.5) * h, iy * h])
        return np.vstack([vert, horiz])

    @cached_property
    def cell_edges(self) -> np.ndarray:
        """``(n_cells, 4)`` edge ids ordered (left, right, bottom, top)."""
        n = self.n_fine
        iy, ix = np.divmod(np.arange(self.n_cells), n)
        left = iy * (n + 1) + ix
        bottom = self.n_vertical_edges + iy * n + ix
        return np.column_stack([left, left + 1, bottom, bottom + n])

    @cached_property
    def cell_vertices(self) -> np.ndarray:
        """``(n_cells, 4)`` vertex ids ordered (00, 10, 01, 11) in local (x, y)."""
        n = self.n_fine
        iy, ix = np.divmod(np.arange(self.n_cells), n)
        v00 = iy * (n + 1) + ix
        return np.column_stack([v00, v00 + 1, v00 + n + 1, v00 + n + 2])

    @cached_property
    def edge_cells(self) -> np.ndarray:
        """``(n_edges, 2)`` cells on the (negative, positive) side of each edge; -1 outside Ω."""
        out = np.full((self.n_edges, 2), -1, dtype=np.int64)
        ce = self.cell_edges
        cells = np.arange(self.n_cells)
        out[ce[:, 1], 0] = cells  # cell lies left of its right edge
        out[ce[:, 0], 1] = cells
        out[ce[:, 3], 0] = cells
        out[ce[:, 2], 1] = cells
        return out

    @cached_property
    def boundary_edge_mask(self) -> np.ndarray:
        return (self.edge_cells < 0).any(axis=1)

    @cached_property
    def interior_edges(self) -> np.ndarray:
        return np.flatnonzero(~self.boundary_edge_mask)

    @cached_property
    def cell_element(self) -> np.ndarray:
        """Coarse element owning each fine cell."""
        r = self.refinement_ratio
        iy, ix = np.divmod(np.arange(self.n_cells), self.n_fine)
        return (iy // r) * self.n_coarse + ix // r

    def element_cells(self, i: int) -> np.ndarray:
        return self.patch_from_box(*self._element_box(i)).cells

    @property
    def coarse_elements(self) -> list[np.ndarray]:
        return [self.element_cells(i) for i in range(self.n_elements)]

    def element_box(self, i: int) -> tuple[int, int]:
        """Coarse indices ``(jx, jy)`` of element ``i``."""
        self._check_element(i)
        jy, jx = divmod(i, self.n_coarse)
        return jx, jy

    def _element_box(self, i: int) -> tuple[int, int, int, int]:
        jx, jy = self.element_box(i)
        return jx, jx, jy, jy

    def _check_element(self, i: int) -> None:
        if not 0 <= i < self.n_elements:
            raise IndexError(f"coarse element {i} out of range [0, {self.n_elements})")

    def interior_node(self, j: int) -> tuple[int, int]:
        """Coarse grid indices ``(kx, ky)`` of interior node ``j``."""
        if not 0 <= j < self.n_interior_nodes:
            raise IndexError(f"interior node {j} out of range")
        ky, kx = divmod(j, self.n_coarse - 1)
        return kx + 1, ky + 1

    def node_neighborhood(self, j: int) -> np.ndarray:
        """The four coarse elements forming ω_j."""
        kx, ky = self.interior_node(j)
        nc = self.n_coarse
        return np.array([(ky - 1) * nc + kx - 1, (ky - 1) * nc + kx, ky * nc + kx - 1, ky * nc + kx])

    def element_interior_nodes(self, i: int) -> dict[int, tuple[int, int]]:
        """Interior coarse nodes at the corners of element ``i``.

        Maps node id -> local corner ``(cx, cy)`` with ``cx, cy`` in {0, 1}.
        """
        jx, jy = self.element_box(i)
        nc = self.n_coarse
        out = {}
        for cy in (0, 1):
            for cx in (0, 1):
                kx, ky = jx + cx, jy + cy
                if 0 < kx < nc and 0 < ky < nc:
                    out[(ky - 1) * (nc - 1) + kx - 1] = (cx, cy)
        return out

    def patch_from_box(self, jx0: int, jx1: int, jy0: int, jy1: int) -> Patch:
        key = (jx0, jx1, jy0, jy1)
        cached = self._patch_cache.get(key)
        if cached is not None:
            return cached
        n, r, nc = self.n_fine, self.refinement_ratio, self.n_coarse
        jys, jxs = np.meshgrid(np.arange(jy0, jy1 + 1), np.arange(jx0, jx1 + 1), indexing="ij")
        elements = (jys * nc + jxs).ravel()
        x0, x1 = jx0 * r, (jx1 + 1) * r  # fine index range [x0, x1)
        y0, y1 = jy0 * r, (jy1 + 1) * r
        iys, ixs = np.meshgrid(np.arange(y0, y1), np.arange(x0, x1), indexing="ij")
        cells = (iys * n + ixs).ravel()

        # vertical edges ix in [x0, x1], rows iy in [y0, y1)
        iy, ix = np.meshgrid(np.arange(y0, y1), np.arange(x0, x1 + 1), indexing="ij")
        v_ids = iy * (n + 1) + ix
        v_int = (ix > x0) & (ix < x1)
        iy, ix = np.meshgrid(np.arange(y0, y1 + 1), np.arange(x0, x1), indexing="ij")
        h_ids = self.n_vertical_edges + iy * n + ix
        h_int = (iy > y0) & (iy < y1)
        edges = np.concatenate([v_ids.ravel(), h_ids.ravel()])
        mask = np.concatenate([v_int.ravel(), h_int.ravel()])
        order = np.argsort(edges)
        edges, mask = edges[order], mask[order]
        patch = Patch(
            element_set=np.sort(elements),
            cells=np.sort(cells),
            edges=edges,
            interior_edges=edges[mask],
            boundary_edges=edges[~mask],
            box=key,
        )
        self._patch_cache[key] = patch
        return patch


def build_hierarchy(n_fine: int, n_coarse: int) -> GridHierarchy:
    """Conforming ``n_fine x n_fine`` fine grid nested in an ``n_coarse x n_coarse`` coarse grid."""
    if int(n_fine) != n_fine or int(n_coarse) != n_coarse or n_fine < 1:
        raise ConfigurationError(f"grid sizes must be positive integers, got n_fine={n_fine}, n_coarse={n_coarse}")
    if n_coarse < 2:
        raise ConfigurationError(f"n_coarse must be at least 2, got n_coarse={n_coarse} (n_fine={n_fine})")
    if n_fine % n_coarse:
        raise ConfigurationError(f"n_coarse={n_coarse} does not divide n_fine={n_fine}")
    return GridHierarchy(int(n_fine), int(n_coarse))


def oversample(g: GridHierarchy, i: int, ell: int) -> Patch:
    """K_{i,ell}: element ``i`` enlarged by ``ell`` rings of coarse elements.

    Corner contact counts, so each ring adds the diagonal neighbours too and
    the patch stays a rectangle of elements clipped at the domain boundary.
    """
    if ell < 0:
        raise ConfigurationError(f"oversampling layers must be nonnegative, got {ell}")
    jx, jy = g.element_box(i)
    last = g.n_coarse - 1
    return g.patch_from_box(max(jx - ell, 0), min(jx + ell, last), max(jy - ell, 0), min(jy + ell, last))
