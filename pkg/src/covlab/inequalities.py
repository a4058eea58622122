"""Covariance functionals and the inequality checks built from them.

Every check follows the same shape: compute both sides on a grid, form
lhs/rhs, attach discretization metadata, and classify the outcome as
holds / holds-at-equality / violated.  A report never rounds in its own
favor: tolerances widen the "holds" band only through the declared
tol_report (quadrature) or the 3-sigma Monte Carlo interval.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .discretize import (Field, Grid, boundary_integral_1d, _cells_1d,
                         divided_difference_char_1d, divided_difference_char_nd,
                         double_integral_divided_difference, integrate_values,
                         trapezoid_weights)
from .exceptions import ConfigError, DomainError, UnsupportedForm
from .measures import Measure
from .operators import (DENSITY_FLOOR, conjugate_exponent, parse_exponent,
                        solve_poisson, weighted_gradient_norm, _spectra_on)

TOL_REPORT = 1e-3
_ABS_FLOOR = 1e-12


# ------------------------------------------------------------------ reports

@dataclass
class InequalityReport:
    """Two-sided evaluation of one named inequality instance."""

    name: str
    n: int
    lhs: float
    rhs: float
    ratio: float
    verdict: str
    p: float | None = None
    q: float | None = None
    tol: float = TOL_REPORT
    meta: dict = field(default_factory=dict)
    subs: list = field(default_factory=list)

    def to_dict(self) -> dict:
        def scrub(v):
            if isinstance(v, dict):
                return {k: scrub(x) for k, x in v.items()}
            if isinstance(v, (list, tuple)):
                return [scrub(x) for x in v]
            if isinstance(v, (np.floating, np.integer)):
                return v.item()
            if isinstance(v, float) and math.isinf(v):
                return "inf"
            return v

        return {
            "name": self.name,
            "n": self.n,
            "p": scrub(self.p),
            "q": scrub(self.q),
            "lhs": self.lhs,
            "rhs": self.rhs,
            "ratio": scrub(self.ratio),
            "verdict": self.verdict,
            "tol": self.tol,
            "meta": scrub(self.meta),
            "subs": [s.to_dict() for s in self.subs],
        }


def classify(lhs: float, rhs: float, tol: float = TOL_REPORT, ci: float = 0.0) -> str:
    """holds / holds-at-equality / violated for a claim lhs <= rhs.

    The slack is tol*rhs for quadrature paths, widened to the Monte Carlo
    3-sigma interval when one is present.
    """
    floor = _ABS_FLOOR * max(1.0, abs(lhs), abs(rhs))
    if lhs <= floor and rhs <= floor:
        return "holds-at-equality"
    slack = max(tol * max(abs(rhs), floor), ci)
    if lhs > rhs + slack:
        return "violated"
    if lhs >= rhs - slack:
        return "holds-at-equality"
    return "holds"


def _ratio(lhs: float, rhs: float) -> float:
    floor = _ABS_FLOOR * max(1.0, abs(lhs))
    if rhs > floor:
        return lhs / rhs
    return 0.0 if lhs <= floor else math.inf


def _report(name, n, lhs, rhs, tol=TOL_REPORT, ci=0.0, p=None, q=None, meta=None):
    return InequalityReport(
        name=name, n=n, lhs=float(lhs), rhs=float(rhs),
        ratio=_ratio(float(lhs), float(rhs)),
        verdict=classify(float(lhs), float(rhs), tol, ci),
        p=p, q=q, tol=tol, meta=meta or {})


# --------------------------------------------------------------- covariance

def _density(m: Measure, grid: Grid) -> np.ndarray:
    if m.is_piecewise:
        return m.density(grid.axes[0])
    return m.density(grid.points()).reshape(grid.shape)


def mean_value(m: Measure, h: Field) -> float:
    rho = _density(m, h.grid)
    return float(integrate_values(h.grid, rho * h.values))


def covariance(m: Measure, g: Field, h: Field) -> float:
    """Quadrature covariance int gh dmu - (int g)(int h)."""
    if g.grid is not h.grid and g.grid.shape != h.grid.shape:
        raise ConfigError("fields must share a grid")
    rho = _density(m, g.grid)
    wt = g.grid.weight_tensor() * rho
    mg = float(np.sum(wt * g.values))
    mh = float(np.sum(wt * h.values))
    return float(np.sum(wt * g.values * h.values)) - mg * mh


def variance(m: Measure, h: Field) -> float:
    return covariance(m, h, h)


def covariance_pairsum(m: Measure, g: Field, h: Field, chunk: int = 4_000_000) -> float:
    """The same covariance as the explicit half double integral
    (1/2) sum_{x,y} [g(x)-g(y)][h(x)-h(y)] dmu dmu, summed pairwise."""
    rho = _density(m, g.grid)
    w = (g.grid.weight_tensor() * rho).reshape(-1)
    gv, hv = g.values.reshape(-1), h.values.reshape(-1)
    npts = len(gv)
    rows = max(1, chunk // npts)
    total = 0.0
    for start in range(0, npts, rows):
        sl = slice(start, min(start + rows, npts))
        gd = gv[sl, None] - gv[None, :]
        hd = hv[sl, None] - hv[None, :]
        total += float(np.sum(w[sl, None] * w[None, :] * gd * hd))
    return 0.5 * total


def gradient_l1(m: Measure, h: Field) -> float:
    """int |grad h| dmu."""
    mag = np.sqrt(np.sum(h.gradient() ** 2, axis=0))
    rho = _density(m, h.grid)
    return float(integrate_values(h.grid, rho * mag))


# -------------------------------------------------------------- variance BL

def verify_bl_variance(m: Measure, h: Field, tol: float = TOL_REPORT) -> InequalityReport:
    """var(h) against the inverse-Hessian Dirichlet energy."""
    if m.is_piecewise:
        raise UnsupportedForm("the variance bound needs a smooth potential")
    lhs = variance(m, h)
    rhs = weighted_gradient_norm(m, h.grid, h.gradient(), 2.0, hess_power=-0.5) ** 2
    rep = _report("BL-var", h.grid.n, lhs, rhs, tol=tol,
                  meta={"grid_shape": list(h.grid.shape), "h": h.name})
    return rep


# ----------------------------------------------------------- asymmetric form

def verify_asym(m: Measure, g: Field, h: Field, p, tol: float = TOL_REPORT,
                scheme: str = "auto") -> InequalityReport:
    """Covariance against the split Hessian-weighted gradient norms.

    The main report pairs |cov(g,h)| with the product of the two weighted
    norms at exponents (q, p).  Sub-reports carry the lam_min-only
    corollary, the dual W^{-1,p} estimate through the Poisson solve, the
    p = inf product form, and (at p = 2) the squared product form.
    """
    if m.is_piecewise:
        raise UnsupportedForm("the asymmetric bound needs a smooth potential; "
                              "piecewise measures are served by the "
                              "divided-difference checks")
    p = parse_exponent(p)
    if p < 2:
        raise DomainError(f"the asymmetric bound requires 2 <= p <= inf, got {p}")
    q = conjugate_exponent(p)
    grid = g.grid
    n = grid.n
    cov = covariance(m, g, h)
    lhs = abs(cov)

    gg, gh = g.gradient(), h.gradient()
    hess_pow = 0.0 if p == math.inf else -1.0 / p
    lam_pow = -1.0 if p == math.inf else (2.0 - p) / p
    term_g = weighted_gradient_norm(m, grid, gg, q, hess_power=hess_pow)
    term_h = weighted_gradient_norm(m, grid, gh, p, hess_power=hess_pow,
                                    lam_exp=lam_pow)
    meta = {"grid_shape": list(grid.shape), "g": g.name, "h": h.name,
            "cov": cov, "term_g": term_g, "term_h": term_h}
    rep = _report("BL4", n, lhs, term_g * term_h, tol=tol, p=p, q=q, meta=meta)

    cor_g = weighted_gradient_norm(m, grid, gg, q,
                                   lam_exp=0.0 if p == math.inf else -1.0 / p)
    cor_h = weighted_gradient_norm(m, grid, gh, p,
                                   lam_exp=0.0 if q == math.inf else -1.0 / q)
    rep.subs.append(_report("corollary-lam", n, lhs, cor_g * cor_h, tol=tol,
                            p=p, q=q, meta={"cov": cov}))

    rep.subs.append(_dual_estimate(m, h, p, tol, scheme, term_h))

    if p == math.inf:
        bl42_g = weighted_gradient_norm(m, grid, gg, 1.0)
        bl42_h = weighted_gradient_norm(m, grid, gh, math.inf, lam_exp=-1.0)
        rep.subs.append(_report("BL4.2", n, lhs, bl42_g * bl42_h, tol=tol,
                                p=p, q=q, meta={"cov": cov}))
    if p == 2.0:
        rep.subs.append(_report("BL2", n, cov * cov, (term_g * term_h) ** 2,
                                tol=tol, p=p, q=q, meta={"cov": cov}))
    return rep


def _dual_estimate(m: Measure, h: Field, p: float, tol: float, scheme: str,
                   term_h: float) -> InequalityReport:
    """|| Hess^{1/p} grad u ||_p <= the (p, lam) weighted norm of grad h,
    with u the Poisson solution for h."""
    if scheme == "auto":
        scheme = "collocation" if m.potential.kind == "gaussian" else "flux"
    u, info = solve_poisson(m, h, scheme=scheme)
    gu = u.gradient()
    lhs = weighted_gradient_norm(m, u.grid, gu, p,
                                 hess_power=0.0 if p == math.inf else 1.0 / p)
    return _report("cobo7", u.grid.n, lhs, term_h, tol=tol, p=p,
                   q=conjugate_exponent(p),
                   meta={"scheme": info["scheme"], "residual": info["residual"],
                         "separable_axis": info["separable_axis"]})


def bl3_reference_rhs(m: Measure, g: Field, h: Field) -> float:
    """sup |h'/f''| times int |g'| dmu, the one-dimensional product form,
    assembled directly from the potential (no weighted-norm machinery)."""
    if m.is_piecewise or g.grid.n != 1:
        raise UnsupportedForm("the product form is one-dimensional and smooth")
    grid = g.grid
    rho = _density(m, grid)
    fpp = m.potential.hessian(grid.points())[:, 0, 0]
    hp = h.gradient()[0]
    mask = rho > DENSITY_FLOOR * float(np.max(rho))
    sup = float(np.max(np.abs(hp[mask]) / fpp[mask]))
    return sup * gradient_l1(m, g)


# --------------------------------------------------------------- trial sets

@dataclass(frozen=True)
class HalfLine:
    """(t, +inf) for side "right", (-inf, t) for side "left"."""
    t: float
    side: str = "right"

    def indicator(self) -> Callable:
        if self.side == "right":
            return lambda pts: pts[..., 0] > self.t
        return lambda pts: pts[..., 0] < self.t


@dataclass(frozen=True)
class Interval:
    a: float
    b: float

    def indicator(self) -> Callable:
        return lambda pts: (pts[..., 0] > self.a) & (pts[..., 0] < self.b)


@dataclass(frozen=True)
class HalfSpace:
    """{x : x . direction < c} for a unit direction."""
    direction: tuple
    c: float

    def indicator(self) -> Callable:
        d = np.asarray(self.direction, dtype=float)
        return lambda pts: pts @ d < self.c


@dataclass(frozen=True)
class BoxSet:
    bounds: tuple

    def indicator(self) -> Callable:
        def ind(pts):
            ok = np.ones(pts.shape[:-1], dtype=bool)
            for d, (lo, hi) in enumerate(self.bounds):
                ok &= (pts[..., d] > lo) & (pts[..., d] < hi)
            return ok
        return ind


def set_perimeter(m: Measure, s, grid: Grid) -> float:
    """Weighted surface measure of the set boundary inside the open support.

    1-D sets reduce to point densities; half-space and box boundaries are
    lower-dimensional quadratures of the density.
    """
    if isinstance(s, HalfLine):
        return boundary_integral_1d(m, s.t, grid)
    if isinstance(s, Interval):
        return boundary_integral_1d(m, s.a, grid) + boundary_integral_1d(m, s.b, grid)
    if isinstance(s, HalfSpace):
        return plane_integral(m, np.asarray(s.direction, float), s.c, grid)
    if isinstance(s, BoxSet):
        total = 0.0
        for d, (lo, hi) in enumerate(s.bounds):
            e = np.zeros(grid.n)
            e[d] = 1.0
            # the restriction sees full-dimension points, so the face axis
            # keeps its slot but opens up to the whole line
            inner = BoxSet(tuple((-math.inf, math.inf) if k == d else b
                                 for k, b in enumerate(s.bounds)))
            for c in (lo, hi):
                total += plane_integral(m, e, c, grid, restrict=inner, skip_axis=d)
        return total
    raise ConfigError(f"unknown set specification {s!r}")


def plane_integral(m: Measure, direction: np.ndarray, c: float, grid: Grid,
                   restrict=None, skip_axis: int | None = None) -> float:
    """int of the density over the hyperplane {x . direction = c}.

    Axis-aligned planes integrate over the remaining grid axes; oblique
    planes use an orthonormal in-plane frame over the bounding box.
    """
    if m.is_piecewise:
        return boundary_integral_1d(m, c, grid)
    n = grid.n
    direction = direction / np.linalg.norm(direction)
    if n == 1:
        lo, hi = grid.axes[0][0], grid.axes[0][-1]
        return float(m.density(np.array([[c]]))[0]) if lo < c < hi else 0.0
    axis = _aligned_axis(direction)
    if axis is not None and skip_axis in (None, axis):
        other = [k for k in range(n) if k != axis]
        mesh = np.meshgrid(*[grid.axes[k] for k in other], indexing="ij")
        pts = np.zeros(mesh[0].shape + (n,))
        for i, k in enumerate(other):
            pts[..., k] = mesh[i]
        pts[..., axis] = c * np.sign(direction[axis])
        vals = m.density(pts)
        if restrict is not None:
            vals = vals * restrict.indicator()(pts)
        w = grid.axis_weights[other[0]]
        for k in other[1:]:
            w = np.multiply.outer(w, grid.axis_weights[k])
        return float(np.sum(w * vals))
    frame = _orthonormal_complement(direction)
    half_diag = 0.5 * math.sqrt(sum((b[1] - b[0]) ** 2 for b in grid.bounds))
    s_axes = [np.linspace(-half_diag, half_diag, 257) for _ in range(n - 1)]
    mesh = np.meshgrid(*s_axes, indexing="ij")
    pts = c * direction + sum(mesh[i][..., None] * frame[:, i] for i in range(n - 1))
    inside = np.ones(pts.shape[:-1], dtype=bool)
    for d, (blo, bhi) in enumerate(grid.bounds):
        inside &= (pts[..., d] >= blo) & (pts[..., d] <= bhi)
    vals = np.where(inside, m.density(pts), 0.0)
    if restrict is not None:
        vals = vals * restrict.indicator()(pts)
    w = trapezoid_weights(s_axes[0])
    for a in s_axes[1:]:
        w = np.multiply.outer(w, trapezoid_weights(a))
    return float(np.sum(w * vals))


def _aligned_axis(direction: np.ndarray) -> int | None:
    hits = np.where(np.abs(np.abs(direction) - 1.0) < 1e-12)[0]
    if len(hits) == 1 and np.sum(np.abs(direction) > 1e-12) == 1:
        return int(hits[0])
    return None


def _orthonormal_complement(direction: np.ndarray) -> np.ndarray:
    n = len(direction)
    a = np.eye(n)
    a[:, 0] = direction
    q, _ = np.linalg.qr(a)
    # first column of q is +-direction; the rest span the plane
    return q[:, 1:]


def divdiff_set(m: Measure, s, grid: Grid, pair_budget: int | None = None) -> float:
    """Divided-difference double integral of the indicator of s."""
    ind = s.indicator()
    if grid.n == 1:
        lo, hi = _cells_1d(grid)
        mids = 0.5 * (lo + hi)
        inside = np.asarray(ind(mids[:, None]), dtype=bool)
        return divided_difference_char_1d(m, inside, grid)
    kwargs = {} if pair_budget is None else {"pair_budget": pair_budget}
    return divided_difference_char_nd(m, lambda pts: ind(pts), grid, **kwargs)


# ------------------------------------------------------- divided differences

def verify_divided_difference(m: Measure, h, grid: Grid | None = None,
                              mc: dict | None = None,
                              tol: float = TOL_REPORT) -> InequalityReport:
    """Double divided-difference integral against 2^n times the gradient mass.

    h may be a Field (Lipschitz mode) or a trial set (characteristic mode,
    where the right side is the weighted boundary measure of the set).
    """
    if isinstance(h, Field):
        grid = h.grid
        dd = double_integral_divided_difference(m, h, mc=mc)
        lhs = dd["value"]
        rhs_core = gradient_l1(m, h)
        meta = {"mode": "field", "h": h.name, "grid_shape": list(grid.shape),
                "mc_ci": dd["mc_ci"], "ratio_no_prefactor": _ratio(lhs, rhs_core)}
        n = grid.n
        return _report("t1", n, lhs, (2.0 ** n) * rhs_core, tol=tol,
                       ci=(dd["mc_ci"] or 0.0), meta=meta)
    if grid is None:
        raise ConfigError("characteristic mode needs an explicit grid")
    n = grid.n
    lhs = divdiff_set(m, h, grid)
    rhs_core = set_perimeter(m, h, grid)
    meta = {"mode": "characteristic", "set": repr(h),
            "grid_shape": list(grid.shape),
            "ratio_no_prefactor": _ratio(lhs, rhs_core)}
    return _report("t1", n, lhs, (2.0 ** n) * rhs_core, tol=tol, meta=meta)


def layer_cake_split(m: Measure, h: Field, levels: int = 64,
                     mc: dict | None = None) -> tuple[float, float]:
    """lhs(h) and its layer-cake form over the threshold sets of h.

    h must be nonnegative.  In one dimension the t-integrand is piecewise
    constant between distinct cell-midpoint values of h, so the t-integral
    is exact; higher dimensions use midpoint levels between 0 and max h.
    """
    if float(h.values.min()) < -1e-12:
        raise DomainError("layer-cake split needs a nonnegative field")
    lhs = double_integral_divided_difference(m, h, mc=mc)["value"]
    top = float(h.values.max())
    if top <= 0.0:
        return lhs, 0.0
    grid = h.grid
    total = 0.0
    if grid.n == 1:
        lo, hi = _cells_1d(grid)
        hmid = np.interp(0.5 * (lo + hi), grid.axes[0], h.values)
        cuts = np.concatenate([[0.0], np.unique(hmid[hmid > 0.0])])
        for lo_t, hi_t in zip(cuts[:-1], cuts[1:]):
            total += divided_difference_char_1d(m, hmid > lo_t, grid) * (hi_t - lo_t)
    else:
        dt = top / levels
        interp = RegularGridInterpolator(grid.axes, h.values)
        for t in (np.arange(levels) + 0.5) * dt:
            total += divided_difference_char_nd(
                m, lambda pts, lvl=t: interp(pts) > lvl, grid) * dt
    return lhs, total


# ------------------------------------------------------------------- (cov6)

def verify_cov6(m: Measure, g: Field, h: Field, tol: float = TOL_REPORT,
                mc: dict | None = None) -> InequalityReport:
    """|cov| against sup(|grad h|/lam_min) times the gradient-mass and
    divided-difference combination."""
    if m.is_piecewise:
        raise UnsupportedForm("this bound needs a smooth potential")
    grid = g.grid
    n = grid.n
    rho = _density(m, grid)
    mask = rho > DENSITY_FLOOR * float(np.max(rho))
    if m.potential.kind == "gaussian":
        lam_min = np.ones(grid.shape)
    else:
        lam, _ = _spectra_on(m, grid)
        lam_min = lam[:, 0].reshape(grid.shape)
    hmag = np.sqrt(np.sum(h.gradient() ** 2, axis=0))
    C = float(np.max(hmag[mask] / lam_min[mask]))
    grad_term = gradient_l1(m, g)
    if n > 1:
        dd = double_integral_divided_difference(m, g, mc=mc)
        dd_term, ci = dd["value"], (dd["mc_ci"] or 0.0)
    else:
        dd_term, ci = 0.0, 0.0
    lhs = abs(covariance(m, g, h))
    rhs = C * (grad_term + (n - 1) * dd_term)
    return _report("cov6", n, lhs, rhs, tol=tol, ci=C * (n - 1) * ci,
                   meta={"C": C, "grad_term": grad_term, "divdiff_term": dd_term,
                         "g": g.name, "h": h.name})
