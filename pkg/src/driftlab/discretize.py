"""Truncated-box grids, diffusion matrices, Lyapunov-based truncation.

The grid is a uniform axis-aligned box [-R, R]^d with an odd number of
points per axis, so the origin is a node and the boundary layers hit +-R
exactly.  Node indexing is row-major (C order): axis 0 varies slowest.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import InvalidInput, LyapunovFailure

__all__ = [
    "Grid",
    "build_grid",
    "Diffusion",
    "diffusion_bounds",
    "Lyapunov",
    "suggest_truncation",
    "discrete_gradient",
]


@dataclass(frozen=True)
class Grid:
    dim: int
    radius: float
    points_per_axis: int

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise InvalidInput(f"grid dimension must be 1, 2 or 3, got {self.dim}")
        if self.radius <= 0:
            raise InvalidInput("grid radius must be positive")
        n = self.points_per_axis
        if n < 3 or n % 2 == 0:
            raise InvalidInput(f"points per axis must be an odd integer >= 3, got {n}")

    @property
    def spacing(self) -> float:
        return 2.0 * self.radius / (self.points_per_axis - 1)

    @property
    def shape(self) -> tuple:
        return (self.points_per_axis,) * self.dim

    @property
    def node_count(self) -> int:
        return self.points_per_axis ** self.dim

    @cached_property
    def axis(self) -> np.ndarray:
        ax = np.linspace(-self.radius, self.radius, self.points_per_axis)
        # force exact antisymmetry: endpoints at +-R, origin exactly 0
        ax = 0.5 * (ax - ax[::-1])
        ax.setflags(write=False)
        return ax

    @cached_property
    def _nodes(self) -> np.ndarray:
        grids = np.meshgrid(*([self.axis] * self.dim), indexing="ij")
        pts = np.stack([g.ravel() for g in grids], axis=1)
        pts.setflags(write=False)
        return pts

    def nodes(self) -> np.ndarray:
        """All node coordinates, shape (n^d, d), row-major order."""
        return self._nodes

    @cached_property
    def boundary_mask(self) -> np.ndarray:
        """True where any coordinate index is 0 or n-1."""
        n = self.points_per_axis
        idx = np.indices(self.shape)
        mask = np.zeros(self.shape, dtype=bool)
        for k in range(self.dim):
            mask |= (idx[k] == 0) | (idx[k] == n - 1)
        out = mask.ravel()
        out.setflags(write=False)
        return out

    @cached_property
    def interior_mask(self) -> np.ndarray:
        out = ~self.boundary_mask
        out.setflags(write=False)
        return out

    def inner_box_mask(self, fraction: float = 0.5) -> np.ndarray:
        """Nodes with every |x_i| <= fraction * R; the reporting region."""
        lim = fraction * self.radius * (1.0 + 1e-12) + 1e-15
        return np.all(np.abs(self.nodes()) <= lim, axis=1)

    def nodes_csv(self) -> str:
        """Node table as CSV text: index, x1..xd."""
        lines = ["index," + ",".join(f"x{k+1}" for k in range(self.dim))]
        for i, row in enumerate(self.nodes()):
            lines.append(f"{i}," + ",".join(repr(float(v)) for v in row))
        return "\n".join(lines) + "\n"


def build_grid(dim: int, radius: float, points_per_axis: int) -> Grid:
    return Grid(dim=int(dim), radius=float(radius), points_per_axis=int(points_per_axis))


# ---------------------------------------------------------------------------
# Diffusion matrices


@dataclass(frozen=True)
class Diffusion:
    """Constant symmetric strictly positive definite diffusion matrix."""

    matrix: np.ndarray

    def __post_init__(self):
        M = np.atleast_2d(np.asarray(self.matrix, dtype=float))
        if M.shape[0] != M.shape[1]:
            raise InvalidInput("diffusion matrix must be square")
        if not np.array_equal(M, M.T):
            raise InvalidInput("diffusion matrix must be exactly symmetric")
        if np.min(np.linalg.eigvalsh(M)) <= 0:
            raise InvalidInput("diffusion matrix must be strictly positive definite")
        object.__setattr__(self, "matrix", M)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def is_diagonal(self) -> bool:
        return bool(np.array_equal(self.matrix, np.diag(np.diag(self.matrix))))

    def norm_bound(self) -> float:
        """||A|| + ||A^{-1}|| in the spectral norm."""
        ev = np.linalg.eigvalsh(self.matrix)
        return float(np.abs(ev).max() + 1.0 / np.abs(ev).min())


def diffusion_bounds(diffusions) -> float:
    """Supremum of ||A|| + ||A^{-1}|| over a schedule of diffusion matrices."""
    diffusions = list(diffusions)
    if not diffusions:
        raise InvalidInput("at least one diffusion matrix is required")
    return max(d.norm_bound() for d in diffusions)


# ---------------------------------------------------------------------------
# Lyapunov family and truncation radius


@dataclass(frozen=True)
class Lyapunov:
    """V(x) = |x|^(2m); nonnegative and coercive by construction."""

    power: int = 1

    def __post_init__(self):
        if self.power < 1:
            raise InvalidInput("Lyapunov power m must be a positive integer")

    def value(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return np.sum(pts**2, axis=1) ** self.power

    def generator_value(self, points, diffusion: Diffusion, drift) -> np.ndarray:
        """(A:D^2 + b.grad) applied to V at the given points, in closed form."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        m = self.power
        A = diffusion.matrix
        b = drift.evaluate(pts)
        r2 = np.sum(pts**2, axis=1)
        bx = np.einsum("md,md->m", b, pts)
        trA = float(np.trace(A))
        xAx = np.einsum("md,de,me->m", pts, A, pts)
        if m == 1:
            return 2.0 * trA + 2.0 * bx
        r2m2 = r2 ** (m - 1)
        r2m4 = np.where(r2 > 0, r2 ** (m - 2.0), 0.0)
        return (2 * m * r2m2 * trA
                + 2 * m * (2 * m - 2) * r2m4 * xAx
                + 2 * m * r2m2 * bx)


def _directions(dim: int, seed: int = 7) -> np.ndarray:
    dirs = []
    for k in range(dim):
        e = np.zeros(dim)
        e[k] = 1.0
        dirs.append(e.copy())
        dirs.append(-e)
    if dim > 1:
        for signs in np.ndindex(*([2] * dim)):
            v = np.where(np.array(signs) == 0, 1.0, -1.0)
            dirs.append(v / np.linalg.norm(v))
        rng = np.random.default_rng(seed)
        extra = rng.normal(size=(4 * dim, dim))
        extra /= np.linalg.norm(extra, axis=1, keepdims=True)
        dirs.extend(extra)
    return np.unique(np.round(np.array(dirs), 12), axis=0)


def suggest_truncation(lyapunov: Lyapunov, diffusion: Diffusion, drift,
                       theta: float, *, radius_cap: float = 50.0,
                       lattice: float = 0.05, seed: int = 7) -> float:
    """Smallest radius beyond which LV <= -theta along all sampled rays.

    Scans a radial lattice out to ``radius_cap`` along a fixed direction set,
    then refines the violation boundary by bisection.  Raises
    :class:`LyapunovFailure` when the confinement region is unbounded on the
    lattice, which signals that V is not a Lyapunov function for this drift.
    """
    if theta <= 0:
        raise InvalidInput("theta must be positive")
    dirs = _directions(diffusion.dim, seed)

    def worst(r: float) -> float:
        pts = r * dirs
        return float(np.max(lyapunov.generator_value(pts, diffusion, drift)))

    radii = np.arange(lattice, radius_cap + lattice, lattice)
    values = np.array([worst(r) for r in radii])
    violating = values > -theta
    if violating[-1]:
        raise LyapunovFailure(
            f"LV stays above -theta={-theta:g} out to radius {radius_cap:g}; "
            "the Lyapunov condition fails for this drift"
        )
    if not violating.any():
        return float(radii[0])
    i = int(np.max(np.flatnonzero(violating)))
    lo, hi = float(radii[i]), float(radii[i + 1])
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if worst(mid) > -theta:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-9 * max(1.0, hi):
            break
    return hi


# ---------------------------------------------------------------------------
# Discrete gradient


def discrete_gradient(grid: Grid, u) -> tuple[np.ndarray, np.ndarray]:
    """Node-wise gradient: central differences inside, one-sided at the boundary.

    Returns (gradient of shape (N, d), Euclidean norms of shape (N,)).
    """
    u = np.asarray(u, dtype=float)
    if u.shape != (grid.node_count,):
        raise InvalidInput(f"expected {grid.node_count} node values, got shape {u.shape}")
    und = u.reshape(grid.shape)
    if grid.dim == 1:
        parts = [np.gradient(und, grid.spacing, edge_order=1)]
    else:
        parts = np.gradient(und, grid.spacing, edge_order=1)
    grad = np.stack([p.ravel() for p in parts], axis=1)
    return grad, np.linalg.norm(grad, axis=1)
