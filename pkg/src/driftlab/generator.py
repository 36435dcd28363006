"""Assembly of the discrete drift-diffusion generator on a box grid.

The operator sum_ij a_ij d_i d_j + sum_i b_i d_i is discretized with
second-order central differences for the diagonal diffusion terms, the
4-point cross stencil for mixed terms, and first-order upwind differences
for the drift.  Axis terms are assembled as jump rates (rate out of the
diagonal, rate into the neighbor), which makes interior rows sum to zero
by construction and keeps the matrix a Markov generator whenever the
diffusion matrix is diagonal.

Reflecting boundaries mirror the ghost layer across the boundary face
(ghost value = boundary value), so a rate through the wall simply drops
and every row still sums to zero.  Absorbing boundaries zero the boundary
rows: those states are traps, and the implicit-Euler matrix gets an
identity row there.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .discretize import Diffusion, Grid
from .errors import DomainError, InvalidInput

__all__ = ["DiscreteGenerator", "assemble_generator", "generator_to_coo_csv"]

BOUNDARY_TAGS = ("reflecting", "absorbing")


@dataclass
class DiscreteGenerator:
    grid: Grid
    matrix: sparse.csr_matrix
    boundary: str
    monotone: bool
    diffusion: Diffusion
    drift_values: np.ndarray  # (N, d) drift evaluated at the nodes

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def row_sums(self) -> np.ndarray:
        return np.asarray(self.matrix.sum(axis=1)).ravel()

    def scan_monotone(self, rel_tol: float = 1e-12) -> bool:
        """Direct scan: all off-diagonal entries nonnegative (up to rounding)."""
        coo = self.matrix.tocoo()
        off = coo.data[coo.row != coo.col]
        if off.size == 0:
            return True
        scale = np.abs(coo.data).max()
        return bool(off.min() >= -rel_tol * scale)


def _axis_neighbor_entries(grid: Grid, axis: int, direction: int):
    """Flat (row, col) index pairs for nodes having a neighbor along an axis."""
    n = grid.points_per_axis
    idx = np.arange(grid.node_count).reshape(grid.shape)
    src = [slice(None)] * grid.dim
    dst = [slice(None)] * grid.dim
    if direction > 0:
        src[axis] = slice(0, n - 1)
        dst[axis] = slice(1, n)
    else:
        src[axis] = slice(1, n)
        dst[axis] = slice(0, n - 1)
    return idx[tuple(src)].ravel(), idx[tuple(dst)].ravel()


def assemble_generator(grid: Grid, diffusion: Diffusion, drift,
                       boundary: str = "reflecting") -> DiscreteGenerator:
    """Assemble the sparse generator for given diffusion matrix and drift field."""
    if boundary not in BOUNDARY_TAGS:
        raise InvalidInput(f"boundary must be one of {BOUNDARY_TAGS}, got {boundary!r}")
    A = diffusion.matrix
    if diffusion.dim != grid.dim:
        raise InvalidInput("diffusion matrix dimension does not match the grid")
    if drift.dim != grid.dim:
        raise InvalidInput("drift field dimension does not match the grid")
    h = grid.spacing
    nodes = grid.nodes()
    bvals = drift.evaluate(nodes)
    if not np.all(np.isfinite(bvals)):
        bad = int(np.flatnonzero(~np.all(np.isfinite(bvals), axis=1))[0])
        raise DomainError(
            f"drift not evaluable at node {bad} (coords {tuple(nodes[bad])})"
        )

    rows, cols, data = [], [], []

    def add(r, c, v):
        rows.append(r)
        cols.append(c)
        data.append(v)

    for axis in range(grid.dim):
        diff_rate = A[axis, axis] / h**2
        for direction in (+1, -1):
            r, c = _axis_neighbor_entries(grid, axis, direction)
            if direction > 0:
                drift_rate = np.maximum(bvals[r, axis], 0.0) / h
            else:
                drift_rate = np.maximum(-bvals[r, axis], 0.0) / h
            rate = diff_rate + drift_rate
            add(r, c, rate)
            add(r, r, -rate)

    # mixed second derivatives: 4-point corner stencil per unordered pair
    n = grid.points_per_axis
    if grid.dim > 1:
        idx_nd = np.indices(grid.shape).reshape(grid.dim, -1)
        all_rows = np.arange(grid.node_count)
        for i in range(grid.dim):
            for j in range(i + 1, grid.dim):
                if A[i, j] == 0.0:
                    continue
                c = A[i, j] / (2.0 * h**2)
                for si, sj, sign in ((1, 1, 1.0), (-1, -1, 1.0),
                                     (1, -1, -1.0), (-1, 1, -1.0)):
                    shifted = idx_nd.copy()
                    shifted[i] = np.clip(shifted[i] + si, 0, n - 1)
                    shifted[j] = np.clip(shifted[j] + sj, 0, n - 1)
                    col = np.ravel_multi_index(shifted, grid.shape)
                    add(all_rows, col, np.full(grid.node_count, sign * c))

    rows = np.concatenate([np.asarray(r).ravel() for r in rows])
    cols = np.concatenate([np.asarray(c).ravel() for c in cols])
    vals = np.concatenate([np.asarray(d, dtype=float).ravel() for d in data])

    if boundary == "absorbing":
        keep = ~grid.boundary_mask[rows]
        rows, cols, vals = rows[keep], cols[keep], vals[keep]

    mat = sparse.coo_matrix((vals, (rows, cols)),
                            shape=(grid.node_count, grid.node_count)).tocsr()
    mat.sum_duplicates()

    gen = DiscreteGenerator(grid=grid, matrix=mat, boundary=boundary,
                            monotone=False, diffusion=diffusion,
                            drift_values=bvals)
    gen.monotone = gen.scan_monotone()
    return gen


def generator_to_coo_csv(gen: DiscreteGenerator) -> str:
    """Serialize to the debug COO triple format: node_i, node_j, value."""
    coo = gen.matrix.tocoo()
    order = np.lexsort((coo.col, coo.row))
    lines = ["node_i,node_j,value"]
    for k in order:
        lines.append(f"{coo.row[k]},{coo.col[k]},{repr(float(coo.data[k]))}")
    return "\n".join(lines) + "\n"
