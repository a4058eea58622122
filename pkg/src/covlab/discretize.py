"""Tensor-product grids, quadrature and divided-difference double integrals.

Trapezoid is the default rule (refinement by node doubling nests the coarse
nodes); composite Gauss-Legendre panels are opt-in.  Fields are plain value
arrays over the grid, optionally carrying an analytic gradient.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .exceptions import (BudgetError, ConfigError, InvalidDimension, ModeError,
                         QuadratureError, UnsupportedForm)

NODE_BUDGET = 10_000_000
PAIR_BUDGET = 40_000_000
MIN_POINTS = 16


# -------------------------------------------------------------------- grids

class Grid:
    """Tensor-product quadrature grid.

    axes: per-axis strictly increasing node arrays.
    axis_weights: per-axis quadrature weights (positive, summing to the span).
    """

    def __init__(self, axes: Sequence[np.ndarray], axis_weights: Sequence[np.ndarray],
                 rule: str = "trapezoid", bounds=None):
        self.axes = [np.asarray(a, dtype=float) for a in axes]
        self.axis_weights = [np.asarray(w, dtype=float) for w in axis_weights]
        self.rule = rule
        if bounds is None:
            # boundary-node rules: the intended interval is the node hull
            bounds = [(float(a[0]), float(a[-1])) for a in self.axes]
        if len(bounds) != len(self.axes):
            raise InvalidDimension("bounds must match the number of axes")
        self._bounds = [(float(lo), float(hi)) for lo, hi in bounds]
        for a, w, (lo, hi) in zip(self.axes, self.axis_weights, self._bounds):
            if np.any(np.diff(a) <= 0):
                raise InvalidDimension("grid nodes must be strictly increasing")
            if np.any(w <= 0):
                raise QuadratureError("quadrature weights must be positive")
            span = hi - lo
            if abs(float(np.sum(w)) - span) > 1e-12 * max(1.0, span):
                raise QuadratureError("axis weights must sum to the axis span")
        self._cache = {}

    @property
    def n(self) -> int:
        return len(self.axes)

    @property
    def shape(self) -> tuple:
        return tuple(len(a) for a in self.axes)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def bounds(self):
        return list(self._bounds)

    def spacing(self, axis: int) -> float:
        """Uniform spacing of an axis; raises if the axis is not uniform."""
        d = np.diff(self.axes[axis])
        if d.size and (d.max() - d.min()) > 1e-10 * d.mean():
            raise UnsupportedForm("operation requires a uniform grid axis")
        return float(d.mean())

    @property
    def is_uniform(self) -> bool:
        try:
            for ax in range(self.n):
                self.spacing(ax)
        except UnsupportedForm:
            return False
        return True

    def points(self) -> np.ndarray:
        """All nodes as an array of shape (size, n), C-ordered to match fields."""
        if "points" not in self._cache:
            mesh = np.meshgrid(*self.axes, indexing="ij")
            self._cache["points"] = np.stack([m.reshape(-1) for m in mesh], axis=-1)
        return self._cache["points"]

    def weight_tensor(self) -> np.ndarray:
        """Outer-product quadrature weights, shape == grid.shape."""
        if "weights" not in self._cache:
            w = self.axis_weights[0]
            for ww in self.axis_weights[1:]:
                w = np.multiply.outer(w, ww)
            self._cache["weights"] = w
        return self._cache["weights"]

    def refine(self) -> "Grid":
        """Halve the spacing.  Trapezoid mode doubles cells so coarse nodes nest."""
        if self.rule != "trapezoid":
            return build_grid(self.bounds, [2 * (len(a) - 1) + 1 for a in self.axes], rule=self.rule)
        axes = []
        for a in self.axes:
            mid = 0.5 * (a[:-1] + a[1:])
            merged = np.empty(2 * len(a) - 1)
            merged[0::2] = a
            merged[1::2] = mid
            axes.append(merged)
        return Grid(axes, [trapezoid_weights(a) for a in axes], rule="trapezoid")

    def gradient(self, values: np.ndarray) -> np.ndarray:
        """Central-difference gradient, one-sided at the faces; shape (n, *shape)."""
        values = np.asarray(values, dtype=float)
        grads = np.gradient(values, *self.axes, edge_order=2) if self.n > 1 else \
            [np.gradient(values, self.axes[0], edge_order=2)]
        return np.stack(grads, axis=0)


def trapezoid_weights(nodes: np.ndarray) -> np.ndarray:
    nodes = np.asarray(nodes, dtype=float)
    w = np.empty_like(nodes)
    w[1:-1] = 0.5 * (nodes[2:] - nodes[:-2])
    w[0] = 0.5 * (nodes[1] - nodes[0])
    w[-1] = 0.5 * (nodes[-1] - nodes[-2])
    return w


def _gauss_panel_nodes(a: float, b: float, panels: int, order: int = 4):
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(a, b, panels + 1)
    nodes, weights = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
        nodes.append(mid + half * x)
        weights.append(half * w)
    return np.concatenate(nodes), np.concatenate(weights)


def build_grid(bounds, points_per_axis, rule: str = "trapezoid",
               enforce_min: bool = True) -> Grid:
    """Grid over per-axis (lo, hi) bounds with the given node counts.

    Node counts below 16 are rejected (enforce_min=False exists for small
    doctest-style fixtures only).  The total node budget is 1e7.
    """
    if isinstance(points_per_axis, int):
        points_per_axis = [points_per_axis] * len(bounds)
    if len(points_per_axis) != len(bounds):
        raise ConfigError("points_per_axis must match the number of bounds")
    total = 1
    for npts in points_per_axis:
        if enforce_min and npts < MIN_POINTS:
            raise ConfigError(f"at least {MIN_POINTS} nodes per axis required, got {npts}")
        if npts < 2:
            raise ConfigError("need at least 2 nodes per axis")
        total *= npts
    if total > NODE_BUDGET:
        raise BudgetError(f"grid of {total} nodes exceeds the {NODE_BUDGET} budget; "
                          "reduce points_per_axis or use the Monte Carlo path")
    axes, weights = [], []
    for (lo, hi), npts in zip(bounds, points_per_axis):
        if not hi > lo:
            raise ConfigError(f"empty axis bounds ({lo}, {hi})")
        if rule == "trapezoid":
            a = np.linspace(lo, hi, npts)
            axes.append(a)
            weights.append(trapezoid_weights(a))
        elif rule == "gauss":
            panels = max(1, npts // 4)
            a, w = _gauss_panel_nodes(lo, hi, panels)
            axes.append(a)
            weights.append(w)
        else:
            raise ConfigError(f"unknown quadrature rule {rule!r}")
    return Grid(axes, weights, rule=rule,
                bounds=[(float(lo), float(hi)) for lo, hi in bounds])


def build_segmented_grid_1d(breakpoints, points_per_segment: int = 33) -> Grid:
    """1-D grid whose nodes align exactly with the given breakpoints.

    Each segment gets its own uniform subgrid, so step densities and kinked
    integrands are resolved regardless of how thin a segment is.
    """
    b = np.asarray(breakpoints, dtype=float)
    if np.any(np.diff(b) <= 0):
        raise ConfigError("breakpoints must be strictly increasing")
    nodes = [np.linspace(b[i], b[i + 1], points_per_segment)[:-1] for i in range(len(b) - 1)]
    nodes.append(np.array([b[-1]]))
    a = np.concatenate(nodes)
    return Grid([a], [trapezoid_weights(a)], rule="trapezoid")


def grid_for_measure(m, points_per_axis=None, tail_tol: float = 1e-10,
                     rule: str = "trapezoid", points_per_segment: int = 65) -> Grid:
    """Reference grid for a measure: truncation box for smooth forms,
    breakpoint-aligned segments for piecewise forms."""
    from .measures import choose_truncation

    if m.is_piecewise:
        return build_segmented_grid_1d(m.breakpoints, points_per_segment)
    if m.grid is not None and points_per_axis is None:
        return m.grid
    bounds = choose_truncation(m.potential, tail_tol)
    return build_grid(bounds, points_per_axis or 129, rule=rule)


# -------------------------------------------------------------------- fields

@dataclass
class Field:
    """Scalar samples over a grid, with an optional analytic gradient."""

    grid: Grid
    values: np.ndarray
    grad: np.ndarray | None = None  # shape (n, *grid.shape) when present
    name: str = ""

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise InvalidDimension(f"field shape {self.values.shape} != grid shape {self.grid.shape}")
        if not np.all(np.isfinite(self.values)):
            bad = np.argwhere(~np.isfinite(self.values))[0]
            raise QuadratureError(f"non-finite field value at grid index {tuple(bad)}")

    @property
    def uses_fd_gradient(self) -> bool:
        return self.grad is None

    def gradient(self) -> np.ndarray:
        if self.grad is not None:
            return self.grad
        return self.grid.gradient(self.values)


def field_from_function(grid: Grid, fn: Callable, grad: Callable | None = None,
                        name: str = "") -> Field:
    pts = grid.points()
    vals = np.asarray(fn(pts), dtype=float).reshape(grid.shape)
    g = None
    if grad is not None:
        g = np.asarray(grad(pts), dtype=float)
        g = np.moveaxis(g.reshape(grid.shape + (grid.n,)), -1, 0)
    return Field(grid, vals, grad=g, name=name)


# ----------------------------------------------------------------- integrate

def _density_on(grid: Grid, m) -> np.ndarray:
    key = ("density", id(m))
    if key not in grid._cache:
        if m.is_piecewise:
            vals = m.density(grid.axes[0])
        else:
            vals = m.density(grid.points()).reshape(grid.shape)
        grid._cache[key] = vals
    return grid._cache[key]


def integrate_values(grid: Grid, values: np.ndarray) -> float:
    values = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(values)):
        bad = np.argwhere(~np.isfinite(values.reshape(grid.shape)))[0]
        raise QuadratureError(f"non-finite integrand at grid index {tuple(bad)}")
    return float(np.sum(grid.weight_tensor() * values))


def integrate(f: Field, m) -> float:
    """Integral of the field against the measure on the field's grid."""
    rho = _density_on(f.grid, m)
    return integrate_values(f.grid, f.values * rho)


def mean(f: Field, m) -> float:
    return integrate(f, m)


# ------------------------------------------------- divided-difference kernel

def _kernel_1d_exact(a0, a1, b0, b1):
    """Exact integral of 1/|x-y| over the disjoint 1-D cell pair [a0,a1] x [b0,b1].

    With H(t) = t ln t - t the value is H(d1) - H(d2) - H(d3) + H(d4) for the
    four corner separations; finite even for touching cells.
    """
    def H(t):
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        pos = t > 0
        out[pos] = t[pos] * np.log(t[pos]) - t[pos]
        return out

    lo_a, hi_a = np.minimum(a0, a1), np.maximum(a0, a1)
    lo_b, hi_b = np.minimum(b0, b1), np.maximum(b0, b1)
    left_hi = np.where(hi_a <= lo_b, hi_a, hi_b)
    left_lo = np.where(hi_a <= lo_b, lo_a, lo_b)
    right_lo = np.where(hi_a <= lo_b, lo_b, lo_a)
    right_hi = np.where(hi_a <= lo_b, hi_b, hi_a)
    return (H(right_hi - left_lo) - H(right_lo - left_lo)
            - H(right_hi - left_hi) + H(right_lo - left_hi))


def _cells_1d(grid: Grid):
    a = grid.axes[0]
    return a[:-1].copy(), a[1:].copy()


def _cell_avg_density_1d(grid: Grid, m) -> np.ndarray:
    lo, hi = _cells_1d(grid)
    if m.is_piecewise:
        mids = 0.5 * (lo + hi)
        return m.density(mids)
    rho = _density_on(grid, m)
    return 0.5 * (rho[:-1] + rho[1:])


def divided_difference_char_1d(m, inside: np.ndarray, grid: Grid) -> float:
    """2 * sum over cell pairs (A x A^c) of rho_i rho_j K_ij with the exact kernel.

    `inside` is a boolean mask over the grid's cells.  Exact for piecewise
    densities; second order for smooth ones.
    """
    lo, hi = _cells_1d(grid)
    rho = _cell_avg_density_1d(grid, m)
    ia = np.where(inside)[0]
    ib = np.where(~inside)[0]
    if len(ia) == 0 or len(ib) == 0:
        return 0.0
    K = _kernel_1d_exact(lo[ia][:, None], hi[ia][:, None], lo[ib][None, :], hi[ib][None, :])
    return 2.0 * float(np.sum((rho[ia][:, None] * rho[ib][None, :]) * K))


def _char_cells_nd(grid: Grid, indicator: Callable) -> tuple:
    """Cell midpoints, masses, and the straddle-resolved inside mask."""
    mids_1d = [0.5 * (a[:-1] + a[1:]) for a in grid.axes]
    widths = [np.diff(a) for a in grid.axes]
    mesh = np.meshgrid(*mids_1d, indexing="ij")
    mids = np.stack([mm.reshape(-1) for mm in mesh], axis=-1)
    vol = widths[0]
    for ww in widths[1:]:
        vol = np.multiply.outer(vol, ww)
    vol = vol.reshape(-1)
    inside = np.asarray(indicator(mids), dtype=bool)
    return mids, vol, inside


def divided_difference_char_nd(m, indicator: Callable, grid: Grid,
                               pair_budget: int = PAIR_BUDGET,
                               chunk: int = 512) -> float:
    """Cell-midpoint double sum of 1/|x-y| over A x A^c; cells straddling the
    boundary are classified by their midpoints."""
    mids, vol, inside = _char_cells_nd(grid, indicator)
    rho = m.density(mids)
    mass = rho * vol
    xa, xb = mids[inside], mids[~inside]
    ma, mb = mass[inside], mass[~inside]
    if len(xa) == 0 or len(xb) == 0:
        return 0.0
    if len(xa) * len(xb) > pair_budget:
        raise BudgetError(f"{len(xa)}x{len(xb)} cell pairs exceed the budget; "
                          "use a coarser scan grid or the Monte Carlo path")
    total = 0.0
    for start in range(0, len(xa), chunk):
        sl = slice(start, start + chunk)
        d = np.sqrt(np.sum((xa[sl, None, :] - xb[None, :, :]) ** 2, axis=-1))
        total += float(np.sum(ma[sl, None] * mb[None, :] / d))
    return 2.0 * total


def double_integral_divided_difference(m, h: Field, mc=None, pair_budget: int = PAIR_BUDGET,
                                       chunk: int = 4_000_000) -> dict:
    """Integral of |h(x)-h(y)| / |x-y| d mu(x) d mu(y) for Lipschitz fields.

    Node-pair product quadrature; diagonal pairs take the local gradient
    magnitude |grad h|(x), which is the continuous extension along x = y.
    Returns {"value": ..., "mc_ci": ...}; the Monte Carlo path (required when
    the pair budget is exceeded) needs an (enabled, samples, seed) spec.
    """
    grid = h.grid
    rho = _density_on(grid, m)
    if m.is_piecewise:
        _check_lipschitz_mode(h)
    w = (grid.weight_tensor() * rho).reshape(-1)
    pts = grid.points()
    vals = h.values.reshape(-1)
    gmag = np.sqrt(np.sum(h.gradient() ** 2, axis=0)).reshape(-1)
    npts = len(vals)
    if npts * npts <= pair_budget:
        return {"value": _dd_pair_sum(pts, vals, w, gmag, chunk), "mc_ci": None}
    if mc is None or not mc.get("enabled", False):
        raise BudgetError(
            f"{npts}^2 node pairs exceed the {pair_budget} budget and Monte Carlo is "
            "disabled; enable mc with a seed or reduce the grid")
    return _dd_monte_carlo(pts, vals, w, gmag, mc)


def _dd_pair_sum(pts, vals, w, gmag, chunk):
    npts = len(vals)
    rows = max(1, chunk // npts)
    total = 0.0
    for start in range(0, npts, rows):
        sl = slice(start, min(start + rows, npts))
        diff = pts[sl, None, :] - pts[None, :, :]
        dist = np.sqrt(np.sum(diff * diff, axis=-1))
        num = np.abs(vals[sl, None] - vals[None, :])
        with np.errstate(divide="ignore", invalid="ignore"):
            phi = num / dist
        diag = dist < 1e-14
        if np.any(diag):
            phi[diag] = np.broadcast_to(gmag[sl, None], phi.shape)[diag]
        total += float(np.sum(w[sl, None] * w[None, :] * phi))
    return total


def _dd_monte_carlo(pts, vals, w, gmag, mc):
    if mc.get("seed") is None:
        raise ConfigError("seed required for the Monte Carlo path")
    samples = int(mc.get("samples", 400_000))
    rng = np.random.default_rng(mc["seed"])
    p = w / np.sum(w)
    i = rng.choice(len(vals), size=samples, p=p)
    j = rng.choice(len(vals), size=samples, p=p)
    diff = pts[i] - pts[j]
    dist = np.sqrt(np.sum(diff * diff, axis=-1))
    num = np.abs(vals[i] - vals[j])
    with np.errstate(divide="ignore", invalid="ignore"):
        phi = np.where(dist > 1e-14, num / np.where(dist > 0, dist, 1.0), gmag[i])
    mass = float(np.sum(w))
    est = mass * mass * float(np.mean(phi))
    sigma = mass * mass * float(np.std(phi, ddof=1)) / math.sqrt(samples)
    return {"value": est, "mc_ci": 3.0 * sigma}


def _check_lipschitz_mode(h: Field):
    """Reject obvious step fields on piecewise measures (characteristic mode exists)."""
    vals = h.values
    rng_h = float(vals.max() - vals.min())
    if rng_h == 0.0:
        return
    a = h.grid.axes[0]
    jumps = np.abs(np.diff(vals)) / rng_h
    if np.any(jumps > 0.5):
        raise ModeError("field jumps by more than half its range across one cell; "
                        "use the characteristic-set mode for step functions")


def boundary_integral_1d(m, t: float, grid: Grid) -> float:
    """Weighted boundary measure of a threshold point inside the open support.

    Smooth measures evaluate the density at t directly.  Piecewise measures
    use the average of the two adjacent cell densities at a node and the
    cell's own density inside a cell, so a resolved zero-density cell
    reports exactly zero.
    """
    a = grid.axes[0]
    if t <= a[0] or t >= a[-1]:
        return 0.0
    if not m.is_piecewise:
        return float(m.density(np.array([[t]]))[0])
    rho = _cell_avg_density_1d(grid, m)
    k = int(np.searchsorted(a, t))
    if 0 < k < len(a) - 1 and abs(t - a[k]) < 1e-12 * max(1.0, abs(t)):
        return 0.5 * float(rho[k - 1] + rho[k])
    return float(rho[k - 1])
