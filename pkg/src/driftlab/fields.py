"""Drift vector fields and their regularization pipeline.

A field is a map b: R^d -> R^d evaluated on batches of points of shape
(m, d).  Dissipativity here means the one-sided monotonicity condition
(b(x+h) - b(x), h) <= 0, checked on sampled point pairs.  The
regularization chain smooths a rough dissipative field in three steps:
convolution with a compactly supported bump kernel, the resolvent-based
Lipschitz surrogate F_alpha, and a small linear pull-in term that makes
the result strongly dissipative.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import optimize
from scipy.interpolate import RegularGridInterpolator
from scipy.stats import qmc

from .errors import ConvergenceError, DomainError, InvalidInput

__all__ = [
    "VectorField",
    "LinearField",
    "PolynomialGradientField",
    "NegSignField",
    "TabulatedField",
    "CompositeField",
    "MollifiedField",
    "YosidaField",
    "Mollifier",
    "standard_mollifier",
    "mollify",
    "yosida_resolve",
    "yosida_field",
    "regularized_drift",
    "DissipativityReport",
    "check_dissipative",
    "sample_pairs",
    "bump_profile",
]


def _as_points(x, dim: int) -> np.ndarray:
    """Coerce scalars, (d,) vectors and (m, d) batches to shape (m, d)."""
    pts = np.asarray(x, dtype=float)
    if pts.ndim == 0:
        pts = pts.reshape(1, 1)
    elif pts.ndim == 1:
        pts = pts.reshape(-1, 1) if dim == 1 else pts.reshape(1, -1)
    if pts.ndim != 2 or pts.shape[1] != dim:
        raise InvalidInput(
            f"expected points of dimension {dim}, got array of shape {np.shape(x)}"
        )
    return pts


def bump_profile(r2: np.ndarray) -> np.ndarray:
    """Unnormalized smooth bump exp(-1/(1-r^2)) on r^2 < 1, zero outside."""
    r2 = np.asarray(r2, dtype=float)
    out = np.zeros_like(r2)
    inside = r2 < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - r2[inside]))
    return out


class VectorField:
    """Base class for drift fields.

    Subclasses implement ``_eval`` on (m, d) arrays.  ``declared_dissipative``
    is metadata; it is verified by sampling, never assumed.
    """

    kind = "abstract"

    def __init__(self, dim: int, declared_dissipative: bool = False):
        if dim < 1:
            raise InvalidInput("field dimension must be a positive integer")
        self.dim = int(dim)
        self.declared_dissipative = bool(declared_dissipative)

    def evaluate(self, points) -> np.ndarray:
        return self._eval(_as_points(points, self.dim))

    def __call__(self, points) -> np.ndarray:
        return self.evaluate(points)

    def _eval(self, pts: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def describe(self) -> str:
        return f"{self.kind}(d={self.dim})"


class LinearField(VectorField):
    """b(x) = M x for a constant d x d matrix M."""

    kind = "builtin-linear"

    def __init__(self, matrix, declared_dissipative: bool | None = None):
        M = np.atleast_2d(np.asarray(matrix, dtype=float))
        if M.shape[0] != M.shape[1]:
            raise InvalidInput("linear field matrix must be square")
        if declared_dissipative is None:
            sym = 0.5 * (M + M.T)
            declared_dissipative = bool(np.max(np.linalg.eigvalsh(sym)) <= 1e-12)
        super().__init__(M.shape[0], declared_dissipative)
        self.matrix = M

    def _eval(self, pts):
        return pts @ self.matrix.T

    def describe(self):
        return f"linear(M={self.matrix.tolist()})"


class PolynomialGradientField(VectorField):
    """b(x) = -grad P(x) for a separable potential P(x) = sum_i p(x_i).

    ``coeffs`` are the coefficients of the single-axis polynomial p in
    increasing degree.  The field is dissipative exactly when p is convex;
    convexity is spot-checked on a lattice unless a declaration is given.
    """

    kind = "polynomial-gradient"

    def __init__(self, coeffs, dim: int = 1, declared_dissipative: bool | None = None):
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.ndim != 1 or coeffs.size == 0:
            raise InvalidInput("potential coefficients must be a nonempty 1-d sequence")
        deriv = np.polynomial.polynomial.polyder(coeffs)
        if declared_dissipative is None:
            second = np.polynomial.polynomial.polyder(deriv)
            xs = np.linspace(-25.0, 25.0, 501)
            declared_dissipative = bool(
                np.min(np.polynomial.polynomial.polyval(xs, second)) >= -1e-9
            ) if second.size else True
        super().__init__(dim, declared_dissipative)
        self.coeffs = coeffs
        self._deriv = deriv

    def _eval(self, pts):
        return -np.polynomial.polynomial.polyval(pts, self._deriv, tensor=False)

    def describe(self):
        return f"poly-gradient(coeffs={self.coeffs.tolist()})"


class NegSignField(VectorField):
    """b(x) = -sign(x) componentwise; the canonical bounded rough dissipative field."""

    kind = "neg-sign"

    def __init__(self, dim: int = 1):
        super().__init__(dim, declared_dissipative=True)

    def _eval(self, pts):
        return -np.sign(pts)


class TabulatedField(VectorField):
    """Field given by values at the nodes of a grid, multilinearly interpolated.

    Evaluation outside the grid box raises :class:`DomainError`.
    """

    kind = "tabulated-on-grid"

    def __init__(self, grid, values, declared_dissipative: bool = False):
        values = np.asarray(values, dtype=float)
        if values.shape != (grid.node_count, grid.dim):
            raise InvalidInput(
                f"tabulated values must have shape {(grid.node_count, grid.dim)}, "
                f"got {values.shape}"
            )
        super().__init__(grid.dim, declared_dissipative)
        self.grid = grid
        self.values = values
        axes = tuple(grid.axis for _ in range(grid.dim))
        self._interp = RegularGridInterpolator(
            axes, values.reshape(grid.shape + (grid.dim,)), bounds_error=True
        )

    def _eval(self, pts):
        try:
            return self._interp(pts)
        except ValueError as exc:
            raise DomainError(f"point outside tabulated domain: {exc}") from exc

    def describe(self):
        return f"tabulated(n={self.grid.points_per_axis}, R={self.grid.radius})"


class CompositeField(VectorField):
    """Weighted sum of component fields."""

    kind = "composite"

    def __init__(self, parts, weights=None, declared_dissipative: bool | None = None):
        parts = list(parts)
        if not parts:
            raise InvalidInput("composite field needs at least one part")
        dim = parts[0].dim
        if any(p.dim != dim for p in parts):
            raise InvalidInput("composite parts must share the same dimension")
        w = np.ones(len(parts)) if weights is None else np.asarray(weights, dtype=float)
        if w.shape != (len(parts),):
            raise InvalidInput("weights must match the number of parts")
        if declared_dissipative is None:
            declared_dissipative = bool(
                all(p.declared_dissipative for p in parts) and np.all(w >= 0)
            )
        super().__init__(dim, declared_dissipative)
        self.parts = parts
        self.weights = w

    def _eval(self, pts):
        out = np.zeros_like(pts)
        for w, p in zip(self.weights, self.parts):
            out += w * p._eval(pts)
        return out

    def describe(self):
        inner = " + ".join(f"{w:g}*{p.describe()}" for w, p in zip(self.weights, self.parts))
        return f"composite({inner})"


# ---------------------------------------------------------------------------
# Mollification


@dataclass(frozen=True)
class Mollifier:
    """Convolution kernel j^d * sigma(j x): the fixed bump, support radius 1/j.

    ``offsets`` and ``weights`` encode the fixed-order tensor Gauss-Legendre
    quadrature of the kernel over its support.  Weights absorb the kernel
    values and the normalization, so sum(weights) == 1 holds by construction
    and convolving a constant returns it exactly.
    """

    dim: int
    width_index: float
    order: int
    offsets: np.ndarray  # (Q, d) quadrature points in the support box
    weights: np.ndarray  # (Q,) nonnegative, unit sum

    @property
    def support_radius(self) -> float:
        return 1.0 / self.width_index

    def mass(self) -> float:
        return float(np.sum(self.weights))


def standard_mollifier(dim: int, width_index: float, order: int = 16) -> Mollifier:
    """Build the bump-kernel quadrature for a given width index j > 0."""
    if width_index <= 0:
        raise InvalidInput("mollifier width index must be positive")
    nodes, glw = leggauss(order)
    # exact +/- symmetry of the rule, so odd integrands cancel in pairs
    nodes = 0.5 * (nodes - nodes[::-1])
    glw = 0.5 * (glw + glw[::-1])
    grids = np.meshgrid(*([nodes] * dim), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    wts = np.ones(pts.shape[0])
    for g in np.meshgrid(*([glw] * dim), indexing="ij"):
        wts *= g.ravel()
    dens = bump_profile(np.sum(pts**2, axis=1))
    weights = wts * dens
    total = weights.sum()
    weights = weights / total
    offsets = pts / width_index
    return Mollifier(dim=dim, width_index=float(width_index), order=order,
                     offsets=offsets, weights=weights)


class MollifiedField(VectorField):
    """Convolution of a base field with the standard bump kernel."""

    kind = "mollified"

    def __init__(self, base: VectorField, width_index: float, order: int = 16):
        super().__init__(base.dim, base.declared_dissipative)
        self.base = base
        self.mollifier = standard_mollifier(base.dim, width_index, order)

    def _eval(self, pts):
        moll = self.mollifier
        q = moll.weights.size
        out = np.empty_like(pts)
        chunk = max(1, 262144 // q)
        for s in range(0, pts.shape[0], chunk):
            block = pts[s:s + chunk]
            shifted = block[:, None, :] - moll.offsets[None, :, :]
            vals = self.base.evaluate(shifted.reshape(-1, self.dim))
            vals = vals.reshape(block.shape[0], q, self.dim)
            out[s:s + chunk] = np.einsum("q,mqd->md", moll.weights, vals)
        return out

    def describe(self):
        return f"mollified(j={self.mollifier.width_index:g}, {self.base.describe()})"


def mollify(field: VectorField, width_index: float, order: int = 16) -> MollifiedField:
    """Smooth ``field`` by convolution with the bump kernel of support 1/width_index."""
    return MollifiedField(field, width_index, order)


# ---------------------------------------------------------------------------
# Yosida approximation


def _resolve_fallback(field, alpha, x, y0, tol, max_iter):
    """Per-point fallback: monotone bisection in 1d, damped FD Newton in d >= 2."""
    d = field.dim
    if d == 1:
        def g(y):
            return y - alpha * float(field.evaluate(np.array([[y]]))[0, 0]) - x[0]
        y = float(y0[0])
        g0 = g(y)
        # residual slope >= 1 by dissipativity, so the root is within |g0| of y
        lo, hi = y - abs(g0) - 1.0, y + abs(g0) + 1.0
        glo, ghi = g(lo), g(hi)
        grow = 0
        while glo > 0 or ghi < 0:
            lo -= abs(g0) + 1.0
            hi += abs(g0) + 1.0
            glo, ghi = g(lo), g(hi)
            grow += 1
            if grow > 60:
                raise ConvergenceError("bisection bracket not found", residual=abs(g0))
        root = optimize.brentq(g, lo, hi, xtol=0.1 * tol, maxiter=200)
        return np.array([root])
    y = y0.copy()
    for _ in range(max_iter):
        res = y - alpha * field.evaluate(y[None, :])[0] - x
        if np.linalg.norm(res) <= tol:
            return y
        eps = 1e-6 * (1.0 + np.abs(y))
        jac = np.eye(d)
        for k in range(d):
            step = np.zeros(d)
            step[k] = eps[k]
            fp = field.evaluate((y + step)[None, :])[0]
            fm = field.evaluate((y - step)[None, :])[0]
            jac[:, k] -= alpha * (fp - fm) / (2 * eps[k])
        try:
            dy = np.linalg.solve(jac, res)
        except np.linalg.LinAlgError as exc:
            raise ConvergenceError(f"singular Jacobian in fallback: {exc}",
                                   residual=float(np.linalg.norm(res))) from exc
        lam = 1.0
        base = np.linalg.norm(res)
        for _ in range(30):
            cand = y - lam * dy
            rc = cand - alpha * field.evaluate(cand[None, :])[0] - x
            if np.linalg.norm(rc) < base:
                y = cand
                break
            lam *= 0.5
        else:
            raise ConvergenceError("Newton fallback stalled", residual=base)
    res = y - alpha * field.evaluate(y[None, :])[0] - x
    if np.linalg.norm(res) <= tol:
        return y
    raise ConvergenceError("Newton fallback did not converge",
                           residual=float(np.linalg.norm(res)))


def yosida_resolve(field: VectorField, alpha: float, x, tol: float = 1e-10,
                   max_iter: int = 200) -> np.ndarray:
    """Solve y - alpha*b(y) = x for a dissipative field b.

    Damped fixed-point iteration with per-point step control; dissipativity
    makes the solution unique and the damped map contractive.  Stragglers
    fall back to bisection (1d) or finite-difference Newton (d >= 2).
    Returns an array shaped like the canonical (m, d) input; a scalar input
    in 1d returns a float.
    """
    if alpha <= 0:
        raise InvalidInput("alpha must be positive")
    scalar_in = np.ndim(x) == 0 and field.dim == 1
    pts = _as_points(x, field.dim)
    y = pts.copy()
    res = y - alpha * field.evaluate(y) - pts
    rnorm = np.linalg.norm(res, axis=1)
    omega = np.ones(pts.shape[0])
    for _ in range(max_iter):
        active = rnorm > tol
        if not active.any():
            break
        idx = np.flatnonzero(active)
        cand = y[idx] - omega[idx, None] * res[idx]
        res_c = cand - alpha * field.evaluate(cand) - pts[idx]
        rn_c = np.linalg.norm(res_c, axis=1)
        improved = rn_c <= rnorm[idx] * (1.0 - 0.25 * omega[idx])
        good = idx[improved]
        y[good] = cand[improved]
        res[good] = res_c[improved]
        rnorm[good] = rn_c[improved]
        omega[good] = np.minimum(1.0, omega[good] * 1.25)
        omega[idx[~improved]] *= 0.5
    bad = np.flatnonzero(rnorm > tol)
    for i in bad:
        y[i] = _resolve_fallback(field, alpha, pts[i], y[i], tol, max_iter)
    res = y - alpha * field.evaluate(y) - pts
    rnorm = np.linalg.norm(res, axis=1)
    worst = float(rnorm.max()) if rnorm.size else 0.0
    if worst > tol:
        raise ConvergenceError(
            f"resolvent iteration stalled at residual {worst:.3e} (tol {tol:.1e})",
            residual=worst,
        )
    if scalar_in:
        return float(y[0, 0])
    return y


class YosidaField(VectorField):
    """F_alpha(b) = b((I - alpha b)^{-1} x): Lipschitz dissipative surrogate of b."""

    kind = "yosida"

    def __init__(self, base: VectorField, alpha: float, tol: float = 1e-10):
        if alpha <= 0:
            raise InvalidInput("alpha must be positive")
        super().__init__(base.dim, base.declared_dissipative)
        self.base = base
        self.alpha = float(alpha)
        self.tol = tol

    def _eval(self, pts):
        y = yosida_resolve(self.base, self.alpha, pts, tol=self.tol)
        return self.base.evaluate(y)

    def describe(self):
        return f"yosida(alpha={self.alpha:g}, {self.base.describe()})"


def yosida_field(field: VectorField, alpha: float, tol: float = 1e-10) -> YosidaField:
    return YosidaField(field, alpha, tol)


def regularized_drift(field: VectorField, k: int, order: int = 16) -> CompositeField:
    """Smooth strongly dissipative surrogate: F_{1/k}(b * kernel_k) - (1/k) x.

    The output is strongly dissipative with constant 1/k on sampled pairs,
    up to mollification-quadrature and solve tolerances.
    """
    if int(k) != k or k < 1:
        raise InvalidInput("regularization index k must be a positive integer")
    k = int(k)
    beta = mollify(field, float(k), order=order)
    core = yosida_field(beta, 1.0 / k)
    pull = LinearField(-(1.0 / k) * np.eye(field.dim), declared_dissipative=True)
    out = CompositeField([core, pull], declared_dissipative=True)
    out.strong_constant = 1.0 / k
    return out


# ---------------------------------------------------------------------------
# Dissipativity checking


@dataclass(frozen=True)
class DissipativityReport:
    sample_count: int
    max_inner_product: float
    witness_x: tuple
    witness_h: tuple
    tolerance: float
    strong_constant: float
    passed: bool

    def as_dict(self) -> dict:
        return {
            "sample_count": self.sample_count,
            "max_inner_product": self.max_inner_product,
            "witness_x": list(self.witness_x),
            "witness_h": list(self.witness_h),
            "tolerance": self.tolerance,
            "strong_constant": self.strong_constant,
            "pass": self.passed,
        }


def _pairs_to_arrays(pairs, dim):
    if isinstance(pairs, tuple) and len(pairs) == 2 and not np.isscalar(pairs[0][0] if len(pairs[0]) else 0):
        X = _as_points(pairs[0], dim)
        H = _as_points(pairs[1], dim)
        if X.shape != H.shape:
            raise InvalidInput("point and increment arrays must have matching shapes")
        return X, H
    pairs = list(pairs)
    if not pairs:
        raise InvalidInput("at least one sample pair is required")
    X = _as_points(np.array([np.atleast_1d(p[0]) for p in pairs], dtype=float), dim)
    H = _as_points(np.array([np.atleast_1d(p[1]) for p in pairs], dtype=float), dim)
    return X, H


def check_dissipative(field: VectorField, pairs, tolerance: float = 0.0,
                      strong_constant: float = 0.0) -> DissipativityReport:
    """Maximize (b(x+h)-b(x), h) + strong_constant*|h|^2 over the sampled pairs.

    Passes when the maximum does not exceed ``tolerance``.  With a positive
    ``strong_constant`` this checks strong dissipativity with that constant.
    """
    if tolerance < 0:
        raise InvalidInput("tolerance must be nonnegative")
    X, H = _pairs_to_arrays(pairs, field.dim)
    if X.shape[0] == 0:
        raise InvalidInput("at least one sample pair is required")
    diff = field.evaluate(X + H) - field.evaluate(X)
    vals = np.einsum("md,md->m", diff, H) + strong_constant * np.einsum("md,md->m", H, H)
    i = int(np.argmax(vals))
    top = float(vals[i])
    return DissipativityReport(
        sample_count=int(X.shape[0]),
        max_inner_product=top,
        witness_x=tuple(float(v) for v in X[i]),
        witness_h=tuple(float(v) for v in H[i]),
        tolerance=float(tolerance),
        strong_constant=float(strong_constant),
        passed=bool(top <= tolerance),
    )


def sample_pairs(dim: int, count: int, radius: float, seed: int = 0,
                 h_radius: float | None = None):
    """Low-discrepancy (x, h) sample pairs in the box [-radius, radius]^d."""
    if count < 1:
        raise InvalidInput("sample count must be positive")
    eng = qmc.Halton(d=2 * dim, seed=seed)
    u = eng.random(count)
    X = (2.0 * u[:, :dim] - 1.0) * radius
    H = (2.0 * u[:, dim:] - 1.0) * (radius if h_radius is None else h_radius)
    return X, H
