"""Conditional expectations and the Fisher-information transfer bound.

A smooth joint measure on x = (y, z) is split along its leading axes; all
slice quantities (conditional means, conditional covariances, slice sups)
are computed per y-lattice node by quadrature over the z block.  The main
check compares the marginal Fisher information of the conditioned density
against the joint one with the explicit spectral constant, recording every
intermediate link of the chain so a failure localizes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .constants import ScanResult, _gather
from .discretize import (Field, Grid, build_segmented_grid_1d,
                         field_from_function, integrate_values)
from .exceptions import (DegenerateSliceError, DomainError, InvalidDimension,
                         QuadratureError, UnsupportedForm)
from .inequalities import InequalityReport, TOL_REPORT, _report, covariance
from .measures import Measure, make_custom, normalize
from .operators import _spectra_on

_WEIGHT_FLOOR = 1e-14
_VALUE_FLOOR = 1e-300


@dataclass
class SplitMeasure:
    """Smooth joint measure with the first m_y axes treated as y."""

    joint: Measure
    m_y: int = 1

    def __post_init__(self):
        if self.joint.is_piecewise:
            raise UnsupportedForm("conditioning needs a smooth joint measure")
        if not 1 <= self.m_y < self.joint.n:
            raise InvalidDimension(
                f"m_y = {self.m_y} must leave at least one z axis of {self.joint.n}")

    @property
    def grid(self) -> Grid:
        return self.joint.grid

    @property
    def n_z(self) -> int:
        return self.joint.n - self.m_y

    def y_grid(self) -> Grid:
        g = self.grid
        return Grid(g.axes[:self.m_y], g.axis_weights[:self.m_y], rule=g.rule,
                    bounds=g.bounds[:self.m_y])

    def _tables(self):
        """Flattened (Y, Z) density and weight tables, cached on the grid."""
        key = ("split", id(self.joint), self.m_y)
        g = self.grid
        if key not in g._cache:
            rho = self.joint.density(g.points()).reshape(g.shape)
            y_shape = g.shape[:self.m_y]
            Y = int(np.prod(y_shape))
            Z = int(np.prod(g.shape[self.m_y:]))
            wy = g.axis_weights[0]
            for w in g.axis_weights[1:self.m_y]:
                wy = np.multiply.outer(wy, w)
            wz = g.axis_weights[self.m_y]
            for w in g.axis_weights[self.m_y + 1:]:
                wz = np.multiply.outer(wz, w)
            rho2 = rho.reshape(Y, Z)
            nu = rho2 @ wz.reshape(-1)
            bad = nu <= _VALUE_FLOOR * float(np.max(nu))
            if np.any(bad):
                k = int(np.argmax(bad))
                raise DegenerateSliceError(f"marginal density vanishes at y-node {k}")
            g._cache[key] = (rho2, wy.reshape(-1), wz.reshape(-1), nu, y_shape)
        return g._cache[key]

    def marginal(self) -> np.ndarray:
        """Marginal density of y on the flattened y-lattice."""
        return self._tables()[3]

    def conditional_mean(self, values: np.ndarray) -> np.ndarray:
        """<values>_z on the flattened y-lattice."""
        rho2, _, wz, nu, _ = self._tables()
        v2 = np.asarray(values).reshape(rho2.shape)
        return ((rho2 * v2) @ wz) / nu


def conditional_decompose(sm: SplitMeasure, h: Field) -> tuple[Field, Field]:
    """(⟨h⟩_z as a field on the y-lattice, marginal density field ν)."""
    rho2, wy, wz, nu, y_shape = sm._tables()
    cond = sm.conditional_mean(h.values)
    yg = sm.y_grid()
    total = float(wy @ nu)
    if abs(total - 1.0) > 1e-8:
        raise QuadratureError(f"marginal mass {total!r} is not 1")
    joint_mean = float(wy @ (nu * cond))
    direct = integrate_values(sm.grid, sm.joint.density(
        sm.grid.points()).reshape(sm.grid.shape) * h.values)
    if abs(joint_mean - direct) > 1e-8 * max(1.0, abs(direct)):
        raise QuadratureError(
            f"conditional decomposition lost mass: {joint_mean!r} vs {direct!r}")
    cond_f = Field(yg, cond.reshape(y_shape), name=f"<{h.name or 'h'}>_z")
    nu_f = Field(yg, nu.reshape(y_shape), name="nu")
    return cond_f, nu_f


def _chain_margin(lhs: np.ndarray, rhs: np.ndarray, tol: float) -> dict:
    """Worst slack of a per-node inequality lhs <= rhs.

    The per-node slack tol*max(1, |lhs|, |rhs|) absorbs quadrature error
    at equality cases (a finite-difference gradient on one side only can
    shift it by O(h^2)); the worst excess is reported unfloored so
    sharpness stays visible.
    """
    slack = tol * np.maximum(1.0, np.maximum(np.abs(lhs), np.abs(rhs)))
    excess = (lhs - rhs) / np.maximum(1.0, np.abs(rhs))
    k = int(np.argmax(excess))
    return {"violations": int(np.sum(lhs > rhs + slack)),
            "worst_excess_rel": float(excess[k]), "worst_node": k,
            "worst_margin": float((rhs - lhs)[k])}


def verify_conditional_fisher(sm: SplitMeasure, h: Field,
                              tol: float = TOL_REPORT) -> InequalityReport:
    """Marginal Fisher information against the joint one, constant 2·κ².

    κ is the grid sup of λ_max/λ_min of the potential Hessian.  The chain
    links (conditional-gradient identity, the squared split, the slice
    covariance bound in both its full-Hessian and z-block forms, the
    spectral sup, and the slice Cauchy-Schwarz) are all recorded per
    y-node in the metadata.
    """
    g = sm.grid
    n = g.n
    rho2, wy, wz, nu, y_shape = sm._tables()
    Y, Z = rho2.shape

    values = np.asarray(h.values, dtype=float)
    flags = []
    floor = 1e-12 * float(np.max(np.abs(values)) or 1.0)
    if float(values.min()) < floor:
        values = np.maximum(values, floor)
        flags.append("h_floored")
    grad = h.gradient() if h.grad is not None else g.gradient(values.reshape(g.shape))
    norm_c = float((wy @ ((rho2 * values.reshape(Y, Z)) @ wz)))
    values = values / norm_c
    grad = grad / norm_c

    hv2 = values.reshape(Y, Z)
    cw = rho2 * wz[None, :] / nu[:, None]  # conditional weights, rows sum to 1

    hy = grad[:sm.m_y].reshape(sm.m_y, Y, Z)
    hz = grad[sm.m_y:].reshape(sm.n_z, Y, Z)
    habs = np.sqrt(np.sum(hz ** 2, axis=0))

    pts = g.points()
    fgrad = sm.joint.potential.gradient(pts)
    fy = fgrad[:, :sm.m_y].T.reshape(sm.m_y, Y, Z)
    hess = sm.joint.potential.hessian(pts)
    fyz = hess[:, :sm.m_y, sm.m_y:].reshape(Y, Z, sm.m_y, sm.n_z)

    lam, _vecs = _spectra_on(sm.joint, g)
    lam_min = lam[:, 0].reshape(Y, Z)
    lam_max = lam[:, -1].reshape(Y, Z)
    zz = hess[:, sm.m_y:, sm.m_y:]
    lam_zz = np.linalg.eigvalsh(zz)[:, 0].reshape(Y, Z)

    G = np.sum(cw * hv2, axis=1)
    hy_mean = np.einsum("iyz,yz->iy", hy, cw)
    fy_mean = np.einsum("iyz,yz->iy", fy, cw)
    cov_i = np.einsum("yz,yz,iyz->iy", cw, hv2, fy) - G[None, :] * fy_mean
    G_y = hy_mean - cov_i

    # maximizing unit direction of (<h>_z)_y . u, exact since the map is linear
    mag = np.sqrt(np.sum(G_y ** 2, axis=0))
    u = np.zeros_like(G_y)
    live = mag > 0
    u[:, live] = G_y[:, live] / mag[live]
    u[0, ~live] = 1.0
    cov_u = np.sum(u * cov_i, axis=0)

    proj = np.einsum("iy,yzij->yzj", u, fyz)
    proj_abs = np.sqrt(np.sum(proj ** 2, axis=-1))

    slice_mask = cw > _WEIGHT_FLOOR * np.max(cw, axis=1)[:, None]
    def slice_sup(arr):
        masked = np.where(slice_mask, arr, -np.inf)
        return np.max(masked, axis=1)

    mean_habs = np.sum(cw * habs, axis=1)
    mean_sq_over = np.sum(cw * habs ** 2 / hv2, axis=1)

    node_mask = (rho2 > _WEIGHT_FLOOR * np.max(rho2)).reshape(Y, Z)
    kappa = float(np.max(np.where(node_mask, lam_max / lam_min, 1.0)))
    C = 2.0 * kappa ** 2

    eig3_rhs = mean_habs * slice_sup(proj_abs / lam_min)
    eig3_rhs_block = mean_habs * slice_sup(proj_abs / lam_zz)
    eig37_rhs = mean_habs * kappa
    eig2_rhs = 2.0 * np.sum(hy_mean ** 2, axis=0) + 2.0 * cov_u ** 2
    eig4_rhs = 2.0 * np.sum(hy_mean ** 2, axis=0) + 2.0 * kappa ** 2 * mean_habs ** 2
    eig5_rhs = mean_sq_over * G
    eig8_rhs = mean_sq_over * slice_sup(proj_abs / lam_min) ** 2

    lhs = float(wy @ (nu * mag ** 2 / G))
    grad_sq = np.sum(grad.reshape(n, Y, Z) ** 2, axis=0)
    rhs_core = float(wy @ ((rho2 * grad_sq / hv2) @ wz))

    fd = sm.y_grid().gradient(G.reshape(y_shape)).reshape(sm.m_y, Y)
    carrying = nu > 1e-8 * float(np.max(nu))
    fd_gap = float(np.max((np.abs(fd - G_y)
                           / np.maximum(1.0, np.abs(G_y)))[:, carrying]))

    if kappa > 1e6:
        flags.append("ill-conditioned")
    meta = {
        "C": C, "kappa": kappa, "normalization": norm_c, "flags": flags,
        "fd_identity_gap": fd_gap,
        "eig2": _chain_margin(mag ** 2, eig2_rhs, tol),
        "eig3": _chain_margin(np.abs(cov_u), eig3_rhs, tol),
        "eig3_block": _chain_margin(np.abs(cov_u), eig3_rhs_block, tol),
        "eig37": _chain_margin(np.abs(cov_u), eig37_rhs, tol),
        "eig4": _chain_margin(mag ** 2, eig4_rhs, tol),
        "eig5": _chain_margin(mean_habs ** 2, eig5_rhs, tol),
        "eig8": _chain_margin(cov_u ** 2 / G, eig8_rhs, tol),
    }
    return _report("appl", n, lhs, C * rhs_core, tol=tol, meta=meta)


# ------------------------------------------------------- impossibility scan

def _spike_potential(M: float):
    """Even potential with curvature M inside |x| <= 1/M, linear C^1 tails."""
    w = 1.0 / M

    def value(x):
        r = np.abs(x[..., 0])
        return np.where(r <= w, 0.5 * M * r ** 2, r - 0.5 * w)

    def gradient(x):
        t = x[..., 0]
        gr = np.where(np.abs(t) <= w, M * t, np.sign(t))
        return gr[..., None]

    def hessian(x):
        r = np.abs(x[..., 0])
        return np.where(r <= w, M, 0.0)[..., None, None]

    return make_custom(1, value, gradient=gradient, hessian=hessian, kind="spike")


def bl35_impossibility_scan(M_values=(10.0, 100.0, 1000.0),
                            points_per_segment: int = 129,
                            tail_tol: float = 1e-10) -> ScanResult:
    """Ratio of |cov(x, ramp)| to the sup-times-L1 product across spike scales.

    The candidate bound multiplies sup|g'| by the inverse-curvature gradient
    mass of h; concentrating the curvature spike while the ramp follows it
    drives the ratio up linearly in M, so no uniform constant exists.
    """
    ratios, params, meta_rows = [], [], []
    for M in M_values:
        if M < 1.0:
            raise DomainError(f"spike scale must be >= 1, got {M}")
        c = 0.5 / M
        w = 1.0 / M
        R = c + math.log(2.0 / tail_tol)
        grid = build_segmented_grid_1d([-R, -w, -c, c, w, R], points_per_segment)
        m = normalize(_spike_potential(M), grid)

        def ramp(p, c=c, M=M):
            t = np.clip((p[..., 0] + c) * M, 0.0, 1.0)
            return 3.0 * t ** 2 - 2.0 * t ** 3

        def ramp_grad(p, c=c, M=M):
            t = np.clip((p[..., 0] + c) * M, 0.0, 1.0)
            return (6.0 * t * (1.0 - t) * M)[..., None]

        h = field_from_function(grid, ramp, grad=ramp_grad, name="ramp")
        gx = field_from_function(grid, lambda p: p[..., 0],
                                 grad=lambda p: np.ones(p.shape[:-1] + (1,)),
                                 name="x")
        cov = covariance(m, gx, h)
        x = grid.axes[0]
        rho = m.density(grid.points()).reshape(-1)
        hp = np.abs(h.gradient()[0])
        integrand = np.where(np.abs(x) <= c, hp / M, 0.0)
        rhs = 1.0 * float(integrate_values(grid, rho * integrand))
        ratios.append(abs(cov) / rhs)
        params.append(float(M))
        meta_rows.append({"M": float(M), "cov": cov, "product_bound": rhs})
    return _gather("bl35", "spike", params, ratios, [""] * len(params),
                   meta={"cases": meta_rows})
