"""Sharp-constant scans: threshold families, Cheeger estimates, and the
ball-splitting upper bound.

Scan ratios are reported against the boundary integral without the 2^n
prefactor, so the numbers compare directly with the best-constant
discussion (the uniform half-line scan peaks at 2 ln 2).  Ratio arrays
stay finite: a trial whose boundary integral vanishes while the double
integral does not is reported at a floor-regularized denominator and
flagged "+inf"; the flag, not the number, is the signal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .discretize import (Grid, build_segmented_grid_1d, grid_for_measure,
                         trapezoid_weights, divided_difference_char_1d,
                         boundary_integral_1d, _cells_1d, _cell_avg_density_1d)
from .exceptions import ConfigError, DomainError, InvalidDimension
from .inequalities import (HalfLine, HalfSpace, Interval, InequalityReport,
                           TOL_REPORT, _report, divdiff_set, plane_integral,
                           set_perimeter)
from .measures import Measure, make_piecewise_1d

_PERIMETER_FLOOR = 1e-14


@dataclass
class ScanResult:
    """Per-trial ratios for one scan family."""

    tag: str
    label: str
    parameters: list
    ratios: list
    flags: list
    best_ratio: float
    best_parameter: object
    meta: dict = field(default_factory=dict)

    def rows(self):
        return list(zip(self.parameters, self.ratios))

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

        return {"tag": self.tag, "label": self.label,
                "parameters": scrub(self.parameters), "ratios": scrub(self.ratios),
                "flags": list(self.flags), "best_ratio": scrub(self.best_ratio),
                "best_parameter": scrub(self.best_parameter), "meta": scrub(self.meta)}


def _gather(tag, label, parameters, ratios, flags, meta=None) -> ScanResult:
    finite = [r for r in ratios if math.isfinite(r)]
    if not finite:
        best, best_par = 0.0, None
    else:
        k = int(np.argmax([r if math.isfinite(r) else -math.inf for r in ratios]))
        best, best_par = ratios[k], parameters[k]
    return ScanResult(tag=tag, label=label, parameters=list(parameters),
                      ratios=[float(r) for r in ratios], flags=list(flags),
                      best_ratio=float(best), best_parameter=best_par,
                      meta=meta or {})


def _trial_ratio(lhs: float, per: float, floor: float):
    """(ratio, flag) under the degenerate-trial rules."""
    if per > floor:
        return lhs / per, ""
    if lhs <= floor:
        return 0.0, "skip"
    return lhs / floor, "+inf"


# ------------------------------------------------------------- 1-D scanning

def scan_sharp_constant_1d(m: Measure, mode: str = "half-lines",
                           thresholds=None, trials=None, grid: Grid | None = None,
                           points_per_segment: int = 129,
                           label: str = "") -> ScanResult:
    """Characteristic-function trial scan over half-lines or intervals.

    Ratios are divdiff(chi_A) over the boundary integral, no 2^n factor.
    """
    if m.n != 1:
        raise InvalidDimension("1-D scans need a one-dimensional measure")
    if grid is None:
        grid = grid_for_measure(m, points_per_segment=points_per_segment)
    floor = _PERIMETER_FLOOR * float(np.max(_cell_avg_density_1d(grid, m)))

    if mode == "half-lines":
        if thresholds is None:
            thresholds = grid.axes[0][1:-1]
        sets = [HalfLine(float(t)) for t in thresholds]
        params = [float(t) for t in thresholds]
    elif mode == "intervals":
        if trials is None:
            base = grid.axes[0][1:-1:max(1, (len(grid.axes[0]) - 2) // 16)]
            trials = [(float(a), float(b)) for i, a in enumerate(base)
                      for b in base[i + 1:]]
        sets = [Interval(a, b) for a, b in trials]
        params = [f"({a:.6g},{b:.6g})" for a, b in trials]
    else:
        raise ConfigError(f"unknown scan mode {mode!r}")

    ratios, flags = [], []
    for s in sets:
        lhs = divdiff_set(m, s, grid)
        per = set_perimeter(m, s, grid)
        r, fl = _trial_ratio(lhs, per, floor)
        ratios.append(r)
        flags.append(fl)
    return _gather("char-1d", label, params, ratios, flags,
                   meta={"mode": mode, "nodes": len(grid.axes[0])})


def item1_blowup_report(m: Measure | None = None,
                        resolutions=(17, 33, 65)) -> dict:
    """Half-line scans of the zero-density-cell measure at three refinements.

    No finite constant bounds this family: trials inside the dead cell have
    zero boundary integral with positive double integral.  Reported ratios
    use the floor-regularized denominator; the fitted slope of the largest
    unflagged ratio against log resolution is included rather than a claim
    of infinity.
    """
    if m is None:
        m = make_piecewise_1d([-1.0, -0.1, 0.1, 1.0], [1.0, 0.0, 1.0])
    scans, max_ratios, max_clean = [], [], []
    for pps in resolutions:
        scan = scan_sharp_constant_1d(m, points_per_segment=pps,
                                      label=f"item1-pps{pps}")
        scans.append(scan)
        max_ratios.append(scan.best_ratio)
        clean = [r for r, fl in zip(scan.ratios, scan.flags) if fl == ""]
        max_clean.append(max(clean) if clean else 0.0)
    slope = float(np.polyfit(np.log(np.asarray(resolutions, float)),
                             np.asarray(max_clean), 1)[0])
    return {"resolutions": list(resolutions), "max_ratios": max_ratios,
            "max_unflagged_ratios": max_clean, "log_slope": slope,
            "flagged": ["+inf" in s.flags for s in scans], "scans": scans}


def item2_epsilon_fit(eps_values=(1e-1, 1e-2, 1e-3), delta_ratio: float = 0.5,
                      points_per_segment: int = 65) -> dict:
    """Interval-trial ratios of the spike measures against ln(1/eps).

    Each measure concentrates half its mass on (-eps, eps); the trial set
    is the interval (-(1+delta_ratio) eps, (1+delta_ratio) eps) with the
    grid segmented at the trial boundary.  Returns the linear fit
    ratio ~ a + b ln(1/eps) with its R^2.
    """
    ratios, scans = [], []
    for eps in eps_values:
        outer = 1.0 / (4.0 * (1.0 - eps))
        inner = 1.0 / (4.0 * eps)
        m = make_piecewise_1d([-1.0, -eps, eps, 1.0], [outer, inner, outer])
        a = (1.0 + delta_ratio) * eps
        grid = build_segmented_grid_1d([-1.0, -a, -eps, eps, a, 1.0],
                                       points_per_segment)
        scan = scan_sharp_constant_1d(m, mode="intervals", trials=[(-a, a)],
                                      grid=grid, label=f"item2-eps{eps:g}")
        scans.append(scan)
        ratios.append(scan.ratios[0])
    x = np.log(1.0 / np.asarray(eps_values, float))
    y = np.asarray(ratios, float)
    b, a0 = np.polyfit(x, y, 1)
    resid = y - (a0 + b * x)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return {"eps": list(eps_values), "ratios": [float(r) for r in ratios],
            "a": float(a0), "b": float(b), "r2": r2, "scans": scans}


# ----------------------------------------------------------------- Cheeger

def _cell_masses(m: Measure, grid: Grid):
    """Cell midpoints, per-cell masses (midpoint rule), total mass."""
    mids_1d = [0.5 * (a[:-1] + a[1:]) for a in grid.axes]
    widths = [np.diff(a) for a in grid.axes]
    mesh = np.meshgrid(*mids_1d, indexing="ij")
    mids = np.stack([mm.reshape(-1) for mm in mesh], axis=-1)
    vol = widths[0]
    for w in widths[1:]:
        vol = np.multiply.outer(vol, w)
    mass = m.density(mids) * vol.reshape(-1)
    return mids, mass, float(np.sum(mass))


def cheeger_scan(m: Measure, grid: Grid | None = None, label: str = "") -> ScanResult:
    """Half-space sweep of mu(A)(1-mu(A)) over the boundary integral.

    The sup over the scanned family is a lower bound on the true constant,
    flagged as such in the metadata.
    """
    if grid is None:
        grid = grid_for_measure(m)
    floor = _PERIMETER_FLOOR
    params, ratios, flags = [], [], []
    if m.n == 1:
        lo, hi = _cells_1d(grid)
        cell_mass = _cell_avg_density_1d(grid, m) * (hi - lo)
        cum = np.concatenate([[0.0], np.cumsum(cell_mass)])
        total = cum[-1]
        for k in range(1, len(grid.axes[0]) - 1):
            t = float(grid.axes[0][k])
            mu_a = cum[k] / total
            per = boundary_integral_1d(m, t, grid)
            r, fl = _trial_ratio(mu_a * (1.0 - mu_a), per, floor)
            params.append(t)
            ratios.append(r)
            flags.append(fl)
    else:
        for axis in range(m.n):
            e = np.zeros(m.n)
            e[axis] = 1.0
            nodes = grid.axes[axis]
            nu = np.array([plane_integral(m, e, float(t), grid) for t in nodes])
            cum = np.concatenate([[0.0], np.cumsum(
                0.5 * (nu[:-1] + nu[1:]) * np.diff(nodes))])
            total = cum[-1]
            for k in range(1, len(nodes) - 1):
                mu_a = cum[k] / total
                r, fl = _trial_ratio(mu_a * (1.0 - mu_a), nu[k], floor)
                params.append(f"e{axis + 1}:{nodes[k]:.6g}")
                ratios.append(r)
                flags.append(fl)
    return _gather("cheeger", label, params, ratios, flags,
                   meta={"lower_bound": True})


def cheeger_estimate(m: Measure, grid: Grid | None = None) -> float:
    return cheeger_scan(m, grid).best_ratio


# ------------------------------------------------------------ Ledoux bound

def _is_symmetric(m: Measure) -> bool:
    if m.is_piecewise:
        b, d = m.breakpoints, m.densities
        return (np.allclose(b, -b[::-1], atol=1e-12)
                and np.allclose(d, d[::-1], atol=1e-12))
    box = m.grid.bounds
    half = np.array([min(-lo, hi) for lo, hi in box])
    if np.any(half <= 0):
        return False
    probes = []
    for frac in (0.15, 0.4, 0.75):
        for corner in range(2 ** m.n):
            sgn = np.array([1.0 if corner >> k & 1 else -0.7 for k in range(m.n)])
            probes.append(frac * sgn * half)
    pts = np.array(probes)
    fwd = m.density(pts)
    bwd = m.density(-pts)
    scale = float(np.max(fwd)) + 1e-300
    return bool(np.max(np.abs(fwd - bwd)) <= 1e-10 * scale)


def _ball_mass_curve(dist: np.ndarray, mass: np.ndarray):
    order = np.argsort(dist)
    return dist[order], np.cumsum(mass[order])


def ledoux_scan(m: Measure, alpha: float, r_points: int = 64,
                grid: Grid | None = None, label: str = "") -> ScanResult:
    """Values of 2^n sup-ball-mass(R) + 2 alpha / R over a log-spaced R grid.

    Ball masses are cell sums over cells whose centers lie in the ball,
    clamped at 1 (the measure is a probability measure, so the clamp only
    removes quadrature overshoot).  The R -> inf candidate 2^n times the
    total mass is always included, which keeps the bound at or below 2^n.
    """
    if alpha <= 0:
        raise DomainError(f"alpha must be positive, got {alpha}")
    if grid is None:
        grid = grid_for_measure(m)
    n = m.n
    mids, mass, total = _cell_masses(m, grid)
    total = min(total, 1.0)
    symmetric = _is_symmetric(m)
    if symmetric:
        centers = [np.zeros(n)]
    else:
        per_axis = 9 if n <= 2 else 5
        axes = [np.linspace(lo / 2.0, hi / 2.0, per_axis) for lo, hi in grid.bounds]
        mesh = np.meshgrid(*axes, indexing="ij")
        centers = np.stack([mm.reshape(-1) for mm in mesh], axis=-1)
    curves = []
    for c in centers:
        dist = np.sqrt(np.sum((mids - np.asarray(c)) ** 2, axis=-1))
        curves.append(_ball_mass_curve(dist, mass))

    def sup_ball(r):
        best = 0.0
        for dist_sorted, cum in curves:
            k = int(np.searchsorted(dist_sorted, r, side="right"))
            if k > 0:
                best = max(best, float(cum[k - 1]))
        return min(best, 1.0)

    scale = max((hi - lo) / 2.0 for lo, hi in grid.bounds)
    r_grid = np.geomspace(1e-2 * scale, 1e3 * scale, r_points)
    vals = np.array([(2.0 ** n) * sup_ball(r) + 2.0 * alpha / r for r in r_grid])
    k = int(np.argmin(vals))
    lo_r = r_grid[max(0, k - 1)]
    hi_r = r_grid[min(len(r_grid) - 1, k + 1)]
    fine = np.geomspace(lo_r, hi_r, 33)
    fine_vals = np.array([(2.0 ** n) * sup_ball(r) + 2.0 * alpha / r for r in fine])
    params = [float(r) for r in r_grid] + [float(r) for r in fine] + ["inf"]
    values = list(vals) + list(fine_vals) + [(2.0 ** n) * total]
    order = np.argsort([math.inf if p == "inf" else p for p in params])
    params = [params[i] for i in order]
    values = [float(values[i]) for i in order]
    j = int(np.argmin(values))
    meta = {"bound": values[j], "argmin_R": params[j], "alpha": alpha,
            "symmetric": symmetric, "cell_mass": total,
            "centers": len(curves)}
    return _gather("ledoux", label, params, values, [""] * len(params), meta=meta)


def ledoux_bound(m: Measure, alpha: float, r_points: int = 64,
                 grid: Grid | None = None) -> float:
    return ledoux_scan(m, alpha, r_points=r_points, grid=grid).meta["bound"]


# -------------------------------------------------- half-space reduction

def halfspace_reduction_check(m: Measure, direction, c: float = 0.0,
                              grid: Grid | None = None,
                              pair_budget: int | None = None,
                              marginal_points: int = 257,
                              tol: float = TOL_REPORT) -> InequalityReport:
    """n-D half-space ratio against the 1-D marginal ratio along direction.

    The full-space kernel 1/|x-y| never exceeds 1/|x.d - y.d|, so the n-D
    ratio must sit at or below the marginal's; both sides share the same
    boundary integral up to quadrature.
    """
    if m.is_piecewise or m.n < 2:
        raise InvalidDimension("the reduction check needs a smooth measure in n >= 2")
    if grid is None:
        grid = grid_for_measure(m)
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    hs = HalfSpace(tuple(d), float(c))
    lhs_nd = divdiff_set(m, hs, grid, pair_budget=pair_budget)
    per_nd = plane_integral(m, d, float(c), grid)

    corners = np.array(np.meshgrid(*[(lo, hi) for lo, hi in grid.bounds],
                                   indexing="ij")).reshape(m.n, -1).T
    proj = corners @ d
    t_grid = np.linspace(float(proj.min()), float(proj.max()), marginal_points)
    nu = np.array([plane_integral(m, d, float(t), grid) for t in t_grid])
    mass = float(np.trapezoid(nu, t_grid))
    mgrid = Grid([t_grid], [trapezoid_weights(t_grid)], rule="trapezoid")
    marginal = make_piecewise_1d(t_grid, 0.5 * (nu[:-1] + nu[1:]) + 1e-300)
    mids = 0.5 * (t_grid[:-1] + t_grid[1:])
    lhs_1d = divided_difference_char_1d(marginal, mids < c, mgrid)
    per_1d = boundary_integral_1d(marginal, float(c), mgrid)

    floor = _PERIMETER_FLOOR
    ratio_nd, flag_nd = _trial_ratio(lhs_nd, per_nd, floor)
    ratio_1d, flag_1d = _trial_ratio(lhs_1d, per_1d, floor)
    meta = {"direction": [float(x) for x in d], "c": float(c),
            "per_nd": per_nd, "per_1d": per_1d,
            "marginal_mass_defect": abs(mass - 1.0),
            "skipped": bool(flag_nd == "skip" and flag_1d == "skip")}
    return _report("halfspace-reduction", m.n, ratio_nd, ratio_1d, tol=tol,
                   meta=meta)
