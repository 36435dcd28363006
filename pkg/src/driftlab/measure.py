"""Stationary densities, dual drift, and the integration-by-parts check.

The stationary density of the discrete chain is the null vector of the
transposed generator, computed by shifted inverse iteration and normalized
to unit discrete mass sum(rho) h^d = 1.  The dual generator shares the
diffusion part and carries drift 2 A grad(rho)/rho - b; the duality
residual measures how far the pair is from adjoint with respect to rho.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as spla

from .discretize import Diffusion, Grid, discrete_gradient
from .errors import InvalidInput, StationarityError, SupportError
from .fields import TabulatedField
from .generator import DiscreteGenerator

__all__ = [
    "DiscreteDensity",
    "stationary_density",
    "DualDriftResult",
    "dual_drift",
    "duality_residual",
]


@dataclass(frozen=True)
class DiscreteDensity:
    grid: Grid
    values: np.ndarray  # (N,), nonnegative, sum * h^d == 1

    @property
    def floor(self) -> float:
        return float(self.values.min())

    @property
    def mass(self) -> float:
        return float(self.values.sum() * self.grid.spacing ** self.grid.dim)

    def to_csv(self, reference: np.ndarray | None = None) -> str:
        header = [f"x{k+1}" for k in range(self.grid.dim)] + ["rho"]
        if reference is not None:
            header.append("rho_reference")
        lines = [",".join(header)]
        nodes = self.grid.nodes()
        for i in range(self.grid.node_count):
            row = [repr(float(v)) for v in nodes[i]] + [repr(float(self.values[i]))]
            if reference is not None:
                row.append(repr(float(reference[i])))
            lines.append(",".join(row))
        return "\n".join(lines) + "\n"


def stationary_density(gen: DiscreteGenerator, *, shift: float = 1e-8,
                       residual_tol: float = 1e-9, max_iter: int = 25) -> DiscreteDensity:
    """Null vector of L^T by shifted inverse iteration, mass-normalized.

    Requires a monotone generator with reflecting boundary so that the
    finite chain is conservative and a stationary distribution exists.
    """
    if gen.boundary != "reflecting":
        raise InvalidInput("stationary density requires a reflecting boundary")
    if not gen.monotone:
        raise InvalidInput("stationary density requires a monotone generator")
    n = gen.size
    hd = gen.grid.spacing ** gen.grid.dim
    A = (gen.matrix.T - shift * sparse.identity(n, format="csr")).tocsc()
    try:
        lu = spla.splu(A)
    except RuntimeError as exc:
        raise StationarityError(f"shifted factorization failed: {exc}") from exc
    lt = gen.matrix.T.tocsr()
    v = np.ones(n)
    best = None
    for _ in range(max_iter):
        v = lu.solve(v)
        s = v.sum()
        if s < 0:
            v = -v
        v = v / np.max(np.abs(v))
        cand = v / (v.sum() * hd)
        res = float(np.max(np.abs(lt @ cand)))
        if best is None or res < best[0]:
            best = (res, cand.copy())
        if res <= 0.01 * residual_tol:
            break
    res, rho = best
    if res > residual_tol:
        raise StationarityError(
            f"stationarity residual {res:.3e} exceeds {residual_tol:.1e}"
        )
    if rho.min() < -1e-12 * max(rho.max(), 1.0):
        raise StationarityError(
            f"stationary vector has a negative component {rho.min():.3e}"
        )
    rho = np.maximum(rho, 0.0)
    rho = rho / (rho.sum() * hd)
    inner = gen.grid.inner_box_mask()
    if np.min(rho[inner]) <= 0.0:
        raise StationarityError("stationary density vanishes on the inner half-box")
    return DiscreteDensity(grid=gen.grid, values=rho)


@dataclass(frozen=True)
class DualDriftResult:
    field: TabulatedField
    values: np.ndarray          # (N, d); NaN at masked nodes
    masked_indices: np.ndarray  # nodes below the positivity floor


def dual_drift(density: DiscreteDensity, diffusion: Diffusion, drift_values,
               *, floor_ratio: float = 1e-13) -> DualDriftResult:
    """Dual drift 2 A grad(rho)/rho - b at the nodes.

    Nodes where rho falls below floor_ratio * max(rho) are masked (values
    set to NaN and their indices reported) rather than silently filled.
    """
    grid = density.grid
    rho = density.values
    b = np.asarray(drift_values, dtype=float)
    if b.shape != (grid.node_count, grid.dim):
        raise InvalidInput(
            f"drift values must have shape {(grid.node_count, grid.dim)}, got {b.shape}"
        )
    grad, _ = discrete_gradient(grid, rho)
    masked = rho < floor_ratio * rho.max()
    safe = np.where(masked, 1.0, rho)
    ratio = grad / safe[:, None]
    bhat = 2.0 * ratio @ diffusion.matrix.T - b
    bhat[masked] = np.nan
    field = TabulatedField(grid, bhat)
    return DualDriftResult(field=field, values=bhat,
                           masked_indices=np.flatnonzero(masked))


def duality_residual(gen: DiscreteGenerator, dual_gen: DiscreteGenerator,
                     density: DiscreteDensity, phi, psi) -> float:
    """| sum psi (L phi) rho - sum phi (L^ psi) rho | * h^d.

    Both test functions must be supported in the inner half-box, the
    discrete stand-in for compact support away from the truncation boundary.
    """
    grid = gen.grid
    phi = np.asarray(phi, dtype=float)
    psi = np.asarray(psi, dtype=float)
    if phi.shape != (grid.node_count,) or psi.shape != (grid.node_count,):
        raise InvalidInput("test functions must be node-value vectors")
    inner = grid.inner_box_mask()
    if np.any(np.abs(phi[~inner]) > 0) or np.any(np.abs(psi[~inner]) > 0):
        raise SupportError("test functions must vanish outside the inner half-box")
    rho = density.values
    hd = grid.spacing ** grid.dim
    lhs = float(np.sum(psi * (gen.matrix @ phi) * rho) * hd)
    rhs = float(np.sum(phi * (dual_gen.matrix @ psi) * rho) * hd)
    return abs(lhs - rhs)
