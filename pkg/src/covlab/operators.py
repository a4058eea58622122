"""Discrete generator L = Laplacian - <grad f, grad .> and its solvers.

Two discretizations, each kept to the invariants it can actually meet:

* "flux": divergence form on the node graph.  The weighted matrix
  K = -M G is symmetric positive semidefinite with kernel = constants
  by construction (M = node masses), so self-adjointness in L2(mu) holds
  to machine precision and the Dirichlet pairing telescopes exactly.
* "collocation": central differences with extrapolation closure rows at
  the boundary.  Not exactly self-adjoint, but exact on affine solutions,
  which is what sharp-case diagnostics need.  One-dimensional; problems
  that separate onto a single axis are reduced first.

Poisson solves are refined iteratively until the generator-scale residual
drops below the requested tolerance.
"""

from __future__ import annotations

import math

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, cg, splu

from .discretize import Field, Grid, integrate_values
from .exceptions import (BudgetError, ConfigError, ConvexityError,
                         SolverError, UnsupportedForm)
from .measures import Measure, Potential, normalize

SPLU_MAX_NODES = 70_000
DENSITY_FLOOR = 1e-14
_REFINE_PASSES = 8


# ------------------------------------------------------------ flux operator

def _axis_idx(ndim: int, axis: int, sl) -> tuple:
    idx = [slice(None)] * ndim
    idx[axis] = sl
    return tuple(idx)


class FluxOperator:
    """Divergence-form generator matrix on a uniform tensor grid.

    Edge weights w_e = V exp(-(f_mid + logZ)) / dx_d^2 give
    (K u)_i = sum_{j ~ i} w_ij (u_i - u_j), K = -M G, M_ii = V rho_i.
    """

    def __init__(self, m: Measure, grid: Grid):
        if m.is_piecewise:
            raise UnsupportedForm("the flux operator needs a smooth potential")
        self.m = m
        self.grid = grid
        self.dx = [grid.spacing(d) for d in range(grid.n)]
        vol = float(np.prod(self.dx))
        f = m.potential.value
        self.node_mass = vol * m.density(grid.points()).reshape(grid.shape)
        self.edge_w = []
        for d in range(grid.n):
            mid_axes = [0.5 * (grid.axes[d][1:] + grid.axes[d][:-1]) if k == d else grid.axes[k]
                        for k in range(grid.n)]
            mesh = np.meshgrid(*mid_axes, indexing="ij")
            pts = np.stack([mm.reshape(-1) for mm in mesh], axis=-1)
            fmid = f(pts).reshape([len(a) for a in mid_axes])
            self.edge_w.append(vol / self.dx[d] ** 2 * np.exp(-(fmid + m.logZ)))

    def apply_K(self, u: np.ndarray) -> np.ndarray:
        u = u.reshape(self.grid.shape)
        out = np.zeros_like(u)
        nd = self.grid.n
        for d, w in enumerate(self.edge_w):
            lo = _axis_idx(nd, d, slice(None, -1))
            hi = _axis_idx(nd, d, slice(1, None))
            flux = w * (u[hi] - u[lo])
            out[lo] -= flux
            out[hi] += flux
        return out

    def apply_generator(self, u: np.ndarray) -> np.ndarray:
        return -self.apply_K(u) / self.node_mass

    def diag_K(self) -> np.ndarray:
        nd = self.grid.n
        diag = np.zeros(self.grid.shape)
        for d, w in enumerate(self.edge_w):
            diag[_axis_idx(nd, d, slice(None, -1))] += w
            diag[_axis_idx(nd, d, slice(1, None))] += w
        return diag

    def matrix_K(self) -> sp.csr_matrix:
        shape = self.grid.shape
        size = int(np.prod(shape))
        lin = np.arange(size).reshape(shape)
        nd = self.grid.n
        rows, cols, vals = [], [], []
        for d, w in enumerate(self.edge_w):
            i = lin[_axis_idx(nd, d, slice(None, -1))].reshape(-1)
            j = lin[_axis_idx(nd, d, slice(1, None))].reshape(-1)
            we = w.reshape(-1)
            rows += [i, j, i, j]
            cols += [j, i, i, j]
            vals += [-we, -we, we, we]
        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
        vals = np.concatenate(vals)
        return sp.csr_matrix((vals, (rows, cols)), shape=(size, size))

    def dirichlet(self, g: np.ndarray, u: np.ndarray) -> float:
        """Dirichlet pairing g^T K u as the explicit sum over edges."""
        g = g.reshape(self.grid.shape)
        u = u.reshape(self.grid.shape)
        nd = self.grid.n
        total = 0.0
        for d, w in enumerate(self.edge_w):
            lo = _axis_idx(nd, d, slice(None, -1))
            hi = _axis_idx(nd, d, slice(1, None))
            total += float(np.sum(w * (g[hi] - g[lo]) * (u[hi] - u[lo])))
        return total


def apply_generator(m: Measure, u: Field, scheme: str = "flux") -> Field:
    """L u on the field's grid.

    scheme="flux" uses the divergence-form matrix; scheme="central" uses
    3-point central stencils (one-sided at the faces), exact on polynomials
    of degree <= 2 at interior nodes.
    """
    if scheme == "flux":
        op = FluxOperator(m, u.grid)
        return Field(u.grid, op.apply_generator(u.values), name=f"L[{u.name}]")
    if scheme != "central":
        raise ConfigError(f"unknown generator scheme {scheme!r}")
    if m.is_piecewise:
        raise UnsupportedForm("the central scheme needs a smooth potential")
    grid = u.grid
    vals = u.values
    gradf = m.potential.gradient(grid.points())
    gradf = np.moveaxis(gradf.reshape(grid.shape + (grid.n,)), -1, 0)
    out = np.zeros_like(vals)
    for d in range(grid.n):
        out += _second_diff(vals, grid, d) - gradf[d] * _first_diff(vals, grid, d)
    return Field(grid, out, name=f"L[{u.name}]")


def _first_diff(u: np.ndarray, grid: Grid, axis: int) -> np.ndarray:
    dx = grid.spacing(axis)
    nd = grid.n
    out = np.empty_like(u)
    mid = _axis_idx(nd, axis, slice(1, -1))
    out[mid] = (u[_axis_idx(nd, axis, slice(2, None))]
                - u[_axis_idx(nd, axis, slice(None, -2))]) / (2 * dx)
    first = _axis_idx(nd, axis, 0)
    out[first] = (-3 * u[first] + 4 * u[_axis_idx(nd, axis, 1)]
                  - u[_axis_idx(nd, axis, 2)]) / (2 * dx)
    last = _axis_idx(nd, axis, -1)
    out[last] = (3 * u[last] - 4 * u[_axis_idx(nd, axis, -2)]
                 + u[_axis_idx(nd, axis, -3)]) / (2 * dx)
    return out


def _second_diff(u: np.ndarray, grid: Grid, axis: int) -> np.ndarray:
    dx = grid.spacing(axis)
    nd = grid.n
    out = np.empty_like(u)
    mid = _axis_idx(nd, axis, slice(1, -1))
    out[mid] = (u[_axis_idx(nd, axis, slice(2, None))] - 2 * u[mid]
                + u[_axis_idx(nd, axis, slice(None, -2))]) / dx ** 2
    for face, s in ((0, 1), (-1, -1)):
        idx = _axis_idx(nd, axis, face)
        out[idx] = (u[idx] - 2 * u[_axis_idx(nd, axis, face + s)]
                    + u[_axis_idx(nd, axis, face + 2 * s)]) / dx ** 2
    return out


# -------------------------------------------------------------- poisson solve

def solve_poisson(m: Measure, h: Field, scheme: str = "flux", tol: float = 1e-8,
                  tag: str = "") -> tuple[Field, dict]:
    """Solve L u = h - <h> with <u> = 0 against mu.

    Potentials that split across axes and data varying along a single axis
    are reduced to a one-dimensional solve and broadcast back; the residual
    is still measured on the full grid.  Returns (u, info) where info holds
    the scheme, linear-solver choice and final generator-scale residual.
    """
    if m.is_piecewise:
        raise UnsupportedForm("use the quadrature route for piecewise measures")
    if scheme not in ("flux", "collocation"):
        raise ConfigError(f"unknown poisson scheme {scheme!r}")
    grid = h.grid
    m = _measure_on(m, grid)
    rho = m.density(grid.points()).reshape(grid.shape)
    wt = grid.weight_tensor()
    hbar = float(np.sum(wt * rho * h.values))
    htil = h.values - hbar
    info = {"scheme": scheme, "mean": hbar, "separable_axis": None, "tag": tag}

    axis = _single_axis(htil) if grid.n > 1 else None
    if axis is not None and _splits_across_axes(m.potential, grid):
        u1, sub = _solve_separable(m, grid, htil, axis, scheme, tol)
        u = _broadcast_axis(u1, grid, axis)
        info.update(sub)
        info["separable_axis"] = axis
    elif scheme == "collocation":
        if grid.n > 1:
            raise UnsupportedForm(
                "collocation is one-dimensional; with data varying along a "
                "single axis of a split potential it reduces automatically, "
                "otherwise use the flux scheme")
        u, sub = _solve_collocation_1d(m, grid, htil, tol)
        info.update(sub)
    else:
        u, sub = _solve_flux(m, grid, htil, tol)
        info.update(sub)

    if scheme == "flux":
        op = FluxOperator(m, grid)
        res = op.apply_generator(u) - htil
        info["residual"] = float(np.max(np.abs(res)))
    umean = float(np.sum(wt * rho * u))
    u = u - umean
    return Field(grid, u, name=f"poisson[{h.name or tag}]"), info


def _measure_on(m: Measure, grid: Grid) -> Measure:
    if m.grid is not None and m.grid.shape == grid.shape and \
            all(np.array_equal(a, b) for a, b in zip(m.grid.axes, grid.axes)):
        return m
    return normalize(m.potential, grid)


def _single_axis(vals: np.ndarray) -> int | None:
    scale = float(np.max(np.abs(vals))) or 1.0
    varying = [d for d in range(vals.ndim)
               if float(np.max(vals.max(axis=d) - vals.min(axis=d))) > 1e-12 * scale]
    return varying[0] if len(varying) == 1 else None


def _splits_across_axes(p: Potential, grid: Grid) -> bool:
    """True when Hess f is diagonal on a probe set, i.e. f splits as a sum
    of per-axis terms up to a constant."""
    if p.kind == "gaussian":
        return True
    rng = np.random.default_rng(0)
    lo = np.array([a[0] for a in grid.axes])
    hi = np.array([a[-1] for a in grid.axes])
    pts = lo + (hi - lo) * rng.random((8, p.n))
    H = p.hessian(pts)
    offdiag = H - np.einsum("...i,ij->...ij", np.einsum("...ii->...i", H), np.eye(p.n))
    scale = float(np.max(np.abs(H))) or 1.0
    return float(np.max(np.abs(offdiag))) < 1e-10 * scale


def _axis_potential(p: Potential, axis: int) -> Potential:
    def embed(t):
        t = np.asarray(t, dtype=float)
        x = np.zeros(t.shape[:-1] + (p.n,))
        x[..., axis] = t[..., 0]
        return x

    return Potential(
        1,
        lambda t: p.value(embed(t)),
        lambda t: p.gradient(embed(t))[..., axis:axis + 1],
        lambda t: p.hessian(embed(t))[..., axis:axis + 1, axis:axis + 1],
        kind="axis-slice")


def _solve_separable(m, grid, htil, axis, scheme, tol):
    sub = Grid([grid.axes[axis]], [grid.axis_weights[axis]], rule=grid.rule,
               bounds=[grid.bounds[axis]])
    m1 = normalize(_axis_potential(m.potential, axis), sub)
    take = tuple(slice(None) if d == axis else 0 for d in range(grid.n))
    h1 = htil[take].copy()
    rho1 = m1.density(sub.points()).reshape(sub.shape)
    h1 = h1 - float(np.sum(sub.weight_tensor() * rho1 * h1))
    if scheme == "collocation":
        u1, info = _solve_collocation_1d(m1, sub, h1, tol)
    else:
        u1, info = _solve_flux(m1, sub, h1, tol)
    return u1, info


def _broadcast_axis(u1: np.ndarray, grid: Grid, axis: int) -> np.ndarray:
    shape = [1] * grid.n
    shape[axis] = len(grid.axes[axis])
    return np.broadcast_to(u1.reshape(shape), grid.shape).copy()


def _solve_flux(m, grid, htil, tol):
    # L u = htil reads K u = -M htil through K = -M G
    op = FluxOperator(m, grid)
    rhs = -(op.node_mass * htil).reshape(-1)
    size = rhs.size
    mvec = op.node_mass.reshape(-1)
    if size <= SPLU_MAX_NODES:
        K = op.matrix_K()
        bord = sp.bmat([[K, mvec[:, None]], [mvec[None, :], None]], format="csc")
        lu = splu(bord)

        def solve(r):
            return lu.solve(np.concatenate([r, [0.0]]))[:-1]

        method = "splu"
    else:
        diag = op.diag_K().reshape(-1)
        precond = LinearOperator((size, size), matvec=lambda v: v / diag)
        Kop = LinearOperator((size, size), matvec=lambda v: op.apply_K(v).reshape(-1))

        def solve(r):
            r = r - mvec * (np.sum(r) / np.sum(mvec))
            x, code = cg(Kop, r, rtol=1e-12, atol=0.0, maxiter=5000, M=precond)
            if code > 0:
                raise SolverError(f"conjugate gradients stalled after {code} iterations")
            return x

        method = "cg"

    u = solve(rhs)
    res = np.inf
    for _ in range(_REFINE_PASSES):
        r = rhs - op.apply_K(u).reshape(-1)
        res = float(np.max(np.abs(r / mvec)))
        if res <= tol:
            break
        u = u + solve(r)
    if res > tol:
        raise SolverError(f"poisson residual {res:.3e} above tolerance {tol:.1e}")
    return u.reshape(grid.shape), {"method": method, "residual": res}


def _solve_collocation_1d(m, grid, htil, tol):
    x = grid.axes[0]
    N = len(x)
    dx = grid.spacing(0)
    fp = m.potential.gradient(x[:, None])[:, 0]
    A = np.zeros((N, N))
    idx = np.arange(1, N - 1)
    A[idx, idx - 1] = 1.0 / dx ** 2 + fp[idx] / (2 * dx)
    A[idx, idx] = -2.0 / dx ** 2
    A[idx, idx + 1] = 1.0 / dx ** 2 - fp[idx] / (2 * dx)
    A[0, [0, 1, 2]] = [1.0, -2.0, 1.0]
    A[-1, [-1, -2, -3]] = [1.0, -2.0, 1.0]
    rhs = htil.copy()
    rhs[0] = rhs[-1] = 0.0
    mvec = grid.axis_weights[0] * m.density(grid.points()).reshape(-1)
    bord = np.zeros((N + 1, N + 1))
    bord[:N, :N] = A
    bord[:N, N] = 1.0
    bord[N, :N] = mvec
    lu = sla.lu_factor(bord)

    def solve(r):
        return sla.lu_solve(lu, np.concatenate([r, [0.0]]))[:-1]

    u = solve(rhs)
    res = np.inf
    for _ in range(_REFINE_PASSES):
        r = rhs - A @ u
        res = float(np.max(np.abs(r[1:-1])))
        if res <= tol:
            break
        u = u + solve(r)
    if res > tol:
        raise SolverError(f"collocation residual {res:.3e} above tolerance {tol:.1e}")
    return u, {"method": "dense-lu", "residual": res}


def solve_poisson_1d_exact(m: Measure, h: Field) -> Field:
    """Quadrature route for L u = h - <h> in one dimension.

    Integrating (rho u')' = (h - <h>) rho once gives rho u' as a cumulative
    integral, accumulated from the nearer endpoint on each half so the tail
    cancellation stays benign; u follows by a second cumulative integral.
    Independent of the matrix solvers, so it serves as a cross-check.
    """
    grid = h.grid
    if grid.n != 1:
        raise UnsupportedForm("the quadrature route is one-dimensional")
    x = grid.axes[0]
    if m.is_piecewise:
        rho = m.density(x)
    else:
        rho = m.density(grid.points()).reshape(-1)
    w = grid.axis_weights[0]
    hbar = float(np.sum(w * rho * h.values))
    htil = h.values - hbar

    def cumtrapz(y):
        out = np.empty_like(y)
        out[0] = 0.0
        out[1:] = np.cumsum(0.5 * (y[1:] + y[:-1]) * np.diff(x))
        return out

    F_left = cumtrapz(htil * rho)
    F_right = F_left - F_left[-1]
    mid = len(x) // 2
    F = np.where(np.arange(len(x)) <= mid, F_left, F_right)
    floor = DENSITY_FLOOR * float(np.max(rho))
    with np.errstate(divide="ignore", invalid="ignore"):
        up = np.where(rho > floor, F / np.where(rho > 0, rho, 1.0), 0.0)
    u = cumtrapz(up)
    u = u - float(np.sum(w * rho * u))
    return Field(grid, u, grad=up[None, :], name=f"poisson-q[{h.name}]")


# ---------------------------------------------------------------- commutation

def check_commutation(m: Measure, u: Field, margin: int = 2) -> dict:
    """Compare L(grad u) against grad(L u) + Hess f . grad u on interior nodes.

    All derivatives are central differences; `margin` trims the one-sided
    face stencils so both sides are pure-central where compared.
    """
    if m.is_piecewise:
        raise UnsupportedForm("commutation check needs a smooth potential")
    grid = u.grid
    if min(grid.shape) <= 2 * margin + 1:
        raise ConfigError("grid too small for the requested interior margin")
    pts = grid.points()
    gradf = np.moveaxis(m.potential.gradient(pts).reshape(grid.shape + (grid.n,)), -1, 0)
    hessf = np.moveaxis(m.potential.hessian(pts).reshape(grid.shape + (grid.n, grid.n)),
                        (-2, -1), (0, 1))

    def gen(vals):
        out = np.zeros_like(vals)
        for d in range(grid.n):
            out += _second_diff(vals, grid, d) - gradf[d] * _first_diff(vals, grid, d)
        return out

    du = np.stack([_first_diff(u.values, grid, d) for d in range(grid.n)])
    Lu = gen(u.values)
    lhs = np.stack([gen(du[d]) for d in range(grid.n)])
    rhs = np.stack([_first_diff(Lu, grid, d) for d in range(grid.n)])
    rhs = rhs + np.einsum("de...,e...->d...", hessf, du)
    core = (slice(None),) + tuple(slice(margin, -margin) for _ in range(grid.n))
    diff = np.abs(lhs[core] - rhs[core])
    scale = float(np.max(np.abs(rhs[core]))) or 1.0
    return {
        "max_abs": float(np.max(diff)),
        "rel": float(np.max(diff)) / scale,
        "scale": scale,
        "margin": margin,
    }


# ------------------------------------------------------------- weighted norms

def conjugate_exponent(p: float) -> float:
    p = parse_exponent(p)
    if p == math.inf:
        return 1.0
    if p == 1.0:
        return math.inf
    return p / (p - 1.0)


def parse_exponent(p) -> float:
    if isinstance(p, str):
        if p.lower() in ("inf", "infinity"):
            return math.inf
    try:
        p = float(p)
    except (TypeError, ValueError):
        raise ConfigError(f"exponent must be a number or 'inf', got {p!r}")
    if not p >= 1.0:
        raise ConfigError(f"exponent must satisfy p >= 1, got {p}")
    return p


def _spectra_on(m: Measure, grid: Grid) -> tuple:
    """Eigenvalues (N, n) ascending and frames (N, n, n), cached per grid."""
    key = ("spectra", id(m.potential))
    if key in grid._cache:
        return grid._cache[key]
    pts = grid.points()
    p = m.potential
    if p.spectrum is not None:
        lam, vec = p.spectrum(pts)
        lam = np.asarray(lam, dtype=float)
        vec = np.asarray(vec, dtype=float)
    else:
        H = p.hessian(pts)
        lam, vec = np.linalg.eigh(H)
    if float(lam.min()) <= 0.0:
        raise ConvexityError(
            f"Hessian eigenvalue {float(lam.min()):.3e} <= 0 on the grid; "
            "regularize the potential first")
    grid._cache[key] = (lam, vec)
    return lam, vec


def weighted_gradient_norm(m: Measure, grid: Grid, vec: np.ndarray, p,
                           hess_power: float = 0.0, lam_exp: float = 0.0) -> float:
    """L^p(mu) norm of  lam_min^{lam_exp} Hess^{hess_power} vec.

    vec has shape (n, *grid.shape).  p = inf takes the essential sup over
    nodes carrying density above 1e-14 of the peak.  hess_power = 0 with
    lam_exp = 0 needs no spectral data at all.
    """
    if m.is_piecewise:
        raise UnsupportedForm("weighted norms need a smooth potential")
    p = parse_exponent(p)
    n = grid.n
    v = np.moveaxis(np.asarray(vec, dtype=float), 0, -1).reshape(-1, n)
    if (hess_power == 0.0 and lam_exp == 0.0) or m.potential.kind == "gaussian":
        w = v
    else:
        lam, Q = _spectra_on(m, grid)
        if hess_power != 0.0:
            coeff = np.einsum("xji,xj->xi", Q, v) * lam ** hess_power
            w = np.einsum("xij,xj->xi", Q, coeff)
        else:
            w = v
        if lam_exp != 0.0:
            w = w * lam[:, 0][:, None] ** lam_exp
    mag = np.sqrt(np.sum(w * w, axis=-1)).reshape(grid.shape)
    rho = m.density(grid.points()).reshape(grid.shape)
    if p == math.inf:
        mask = rho > DENSITY_FLOOR * float(np.max(rho))
        return float(np.max(mag[mask]))
    return float(integrate_values(grid, rho * mag ** p)) ** (1.0 / p)


# ---------------------------------------------------------------- diagnostics

def spectral_gap(m: Measure, grid: Grid) -> float:
    """Smallest nonzero eigenvalue of -L in L2(mu), dense route.

    Diagnostic for modest grids (the dense pencil is capped at 2500 nodes).
    """
    op = FluxOperator(m, grid)
    size = int(np.prod(grid.shape))
    if size > 2500:
        raise BudgetError("spectral gap uses a dense eigensolve; keep the grid "
                          "at or below 2500 nodes")
    K = op.matrix_K().toarray()
    Mm = op.node_mass.reshape(-1)
    lam = sla.eigh(K, np.diag(Mm), eigvals_only=True)
    return float(lam[1])
