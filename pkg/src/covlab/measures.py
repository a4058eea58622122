"""Log-concave reference measures dmu = exp(-f) dx and their potentials.

A potential carries callables for f, grad f and Hess f, vectorized over
point arrays of shape (..., n).  Smooth measures pair a potential with a
normalization shift logZ so that exp(-(f + logZ)) integrates to one on the
reference grid; piecewise measures are one-dimensional step densities given
by breakpoints and per-cell values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .exceptions import (ConvexityError, DomainError, InvalidDimension,
                         TruncationError, UnsupportedForm)

_FD_HESS_STEP = 1e-5
_MASS_TOL = 1e-8


@dataclass
class Potential:
    """Strictly convex potential f on R^n.

    value/gradient/hessian accept arrays of shape (..., n) and return
    shapes (...,), (..., n) and (..., n, n).  `kind` tags the analytic
    family so downstream code can pick fast paths (constant Hessian,
    closed-form spectra).  `fd_hessian` marks a finite-difference Hessian
    fallback; reports derived from it are flagged.
    """

    n: int
    value: Callable[[np.ndarray], np.ndarray]
    gradient: Callable[[np.ndarray], np.ndarray]
    hessian: Callable[[np.ndarray], np.ndarray]
    kind: str = "custom"
    fd_hessian: bool = False
    # optional closed-form spectrum: points -> (eigvals (...,n), eigvecs (...,n,n))
    spectrum: Callable[[np.ndarray], tuple] | None = None

    def __post_init__(self):
        if self.n < 1:
            raise InvalidDimension(f"potential dimension must be >= 1, got {self.n}")


@dataclass
class Measure:
    """Normalized measure.  Exactly one of the two representations is set.

    Smooth form: potential + logZ, density exp(-(f(x) + logZ)).
    Piecewise form: 1-D step density on [breakpoints[0], breakpoints[-1]].
    """

    potential: Potential | None = None
    logZ: float = 0.0
    breakpoints: np.ndarray | None = None
    densities: np.ndarray | None = None
    grid: "object | None" = None  # reference Grid used for normalization
    normalization_residual: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.potential.n if self.potential is not None else 1

    @property
    def is_piecewise(self) -> bool:
        return self.breakpoints is not None

    def density(self, x: np.ndarray) -> np.ndarray:
        """Density at points of shape (..., n); 1-D also accepts shape (...,)."""
        x = np.asarray(x, dtype=float)
        if self.is_piecewise:
            pts = x[..., 0] if (x.ndim > 0 and x.shape[-1:] == (1,)) else x
            idx = np.searchsorted(self.breakpoints, pts, side="right") - 1
            idx = np.clip(idx, 0, len(self.densities) - 1)
            out = self.densities[idx]
            inside = (pts >= self.breakpoints[0]) & (pts <= self.breakpoints[-1])
            return np.where(inside, out, 0.0)
        if self.potential.n == 1 and (x.ndim == 0 or x.shape[-1] != 1):
            x = x[..., None]
        return np.exp(-(self.potential.value(x) + self.logZ))

    def log_density(self, x: np.ndarray) -> np.ndarray:
        if self.is_piecewise:
            raise UnsupportedForm("piecewise measures have no smooth log-density")
        return -(self.potential.value(x) + self.logZ)


# ---------------------------------------------------------------- potentials

def make_gaussian(n: int) -> Potential:
    """Standard Gaussian potential f = |x|^2/2 + (n/2) ln(2 pi); Hess = Id."""
    if n < 1:
        raise InvalidDimension(f"gaussian dimension must be >= 1, got {n}")
    const = 0.5 * n * math.log(2.0 * math.pi)

    def value(x):
        x = np.asarray(x, dtype=float)
        return 0.5 * np.sum(x * x, axis=-1) + const

    def gradient(x):
        return np.asarray(x, dtype=float).copy()

    def hessian(x):
        x = np.asarray(x, dtype=float)
        eye = np.eye(n)
        return np.broadcast_to(eye, x.shape[:-1] + (n, n)).copy()

    def spectrum(x):
        x = np.asarray(x, dtype=float)
        lam = np.ones(x.shape[:-1] + (n,))
        vec = np.broadcast_to(np.eye(n), x.shape[:-1] + (n, n)).copy()
        return lam, vec

    return Potential(n, value, gradient, hessian, kind="gaussian", spectrum=spectrum)


def make_radial(phi, dphi, d2phi, n: int, name: str = "radial") -> Potential:
    """Radial potential f(x) = phi(|x|^2).

    Hess f = 2 phi'(s) Id + 4 phi''(s) x x^T with s = |x|^2; eigenvalues are
    2 phi' (multiplicity n-1, tangential) and 4 phi'' s + 2 phi' (radial).
    phi' > 0 is required wherever the Hessian is evaluated.
    """
    if n < 1:
        raise InvalidDimension(f"radial dimension must be >= 1, got {n}")

    def value(x):
        x = np.asarray(x, dtype=float)
        return phi(np.sum(x * x, axis=-1))

    def gradient(x):
        x = np.asarray(x, dtype=float)
        s = np.sum(x * x, axis=-1)
        return 2.0 * dphi(s)[..., None] * x

    def hessian(x):
        x = np.asarray(x, dtype=float)
        s = np.sum(x * x, axis=-1)
        a = 2.0 * dphi(s)
        eye = np.eye(n)
        h = a[..., None, None] * eye
        h = h + 4.0 * d2phi(s)[..., None, None] * (x[..., :, None] * x[..., None, :])
        return h

    def spectrum(x):
        x = np.asarray(x, dtype=float)
        s = np.sum(x * x, axis=-1)
        tang = 2.0 * dphi(s)
        rad = 4.0 * d2phi(s) * s + 2.0 * dphi(s)
        lam = np.empty(x.shape[:-1] + (n,))
        lam[..., : n - 1] = tang[..., None]
        lam[..., n - 1] = rad
        # orthonormal frame with last column along x (any frame at the origin)
        r = np.sqrt(s)
        e = np.where(r[..., None] > 0, x / np.where(r[..., None] > 0, r[..., None], 1.0), 0.0)
        e = np.where(r[..., None] > 0, e, np.eye(n)[..., -1])
        vec = _frame_with_last_axis(e)
        # keep eigenvalue order ascending so lam[...,0] is the minimum
        order = np.argsort(lam, axis=-1)
        lam = np.take_along_axis(lam, order, axis=-1)
        vec = np.take_along_axis(vec, order[..., None, :], axis=-1)
        return lam, vec

    return Potential(n, value, gradient, hessian, kind="radial", spectrum=spectrum)


def _frame_with_last_axis(e: np.ndarray) -> np.ndarray:
    """Orthonormal matrices whose last column is the unit vector field e."""
    n = e.shape[-1]
    if n == 1:
        return np.ones(e.shape[:-1] + (1, 1)) * np.where(e[..., :1, None] >= 0, 1.0, -1.0)
    # Householder mapping e_n -> e gives an orthogonal frame in one shot
    en = np.zeros(n)
    en[-1] = 1.0
    v = e - en
    vnorm2 = np.sum(v * v, axis=-1)
    eye = np.broadcast_to(np.eye(n), e.shape[:-1] + (n, n)).copy()
    safe = vnorm2 > 1e-24
    coef = np.where(safe, 2.0 / np.where(safe, vnorm2, 1.0), 0.0)
    frame = eye - coef[..., None, None] * (v[..., :, None] * v[..., None, :])
    return frame


RADIAL_TABLE = {
    "s/2": (lambda s: s / 2.0, lambda s: np.full_like(np.asarray(s, float), 0.5),
            lambda s: np.zeros_like(np.asarray(s, float))),
    "s^2": (lambda s: np.asarray(s, float) ** 2, lambda s: 2.0 * np.asarray(s, float),
            lambda s: np.full_like(np.asarray(s, float), 2.0)),
    "s^2+s": (lambda s: np.asarray(s, float) ** 2 + s, lambda s: 2.0 * np.asarray(s, float) + 1.0,
              lambda s: np.full_like(np.asarray(s, float), 2.0)),
    "s/2+s^2/10": (lambda s: np.asarray(s, float) / 2.0 + np.asarray(s, float) ** 2 / 10.0,
                   lambda s: 0.5 + np.asarray(s, float) / 5.0,
                   lambda s: np.full_like(np.asarray(s, float), 0.2)),
    "cosh-radial": (lambda s: np.cosh(np.sqrt(np.asarray(s, float))),
                    lambda s: _cosh_radial_d1(np.asarray(s, float)),
                    lambda s: _cosh_radial_d2(np.asarray(s, float))),
}


def _cosh_radial_d1(s):
    # d/ds cosh(sqrt(s)) = sinh(sqrt(s)) / (2 sqrt(s)), -> 1/2 as s -> 0
    r = np.sqrt(s)
    out = np.where(r > 1e-8, np.sinh(np.where(r > 0, r, 1.0)) / np.where(r > 0, 2.0 * r, 1.0), 0.5 + s / 12.0)
    return out


def _cosh_radial_d2(s):
    # d2/ds2 cosh(sqrt(s)) = (sqrt(s) cosh(sqrt(s)) - sinh(sqrt(s))) / (4 s^(3/2))
    r = np.sqrt(s)
    safe = r > 1e-4
    rs = np.where(safe, r, 1.0)
    out = np.where(safe, (rs * np.cosh(rs) - np.sinh(rs)) / (4.0 * rs**3), 1.0 / 12.0 + s / 60.0)
    return out


def make_radial_named(name: str, n: int) -> Potential:
    """Radial potential from the expression table (see RADIAL_TABLE keys)."""
    if name not in RADIAL_TABLE:
        raise UnsupportedForm(f"unknown radial profile {name!r}; known: {sorted(RADIAL_TABLE)}")
    phi, dphi, d2phi = RADIAL_TABLE[name]
    return make_radial(phi, dphi, d2phi, n, name=name)


def make_quadratic_form(a: np.ndarray) -> Potential:
    """Potential f = x^T A x / 2 for a symmetric positive definite A."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidDimension("quadratic form matrix must be square")
    if np.max(np.abs(a - a.T)) > 1e-12:
        raise ConvexityError("quadratic form matrix must be symmetric")
    lam, vec = np.linalg.eigh(a)
    if lam.min() <= 0:
        raise ConvexityError(f"quadratic form matrix must be positive definite (min eig {lam.min():.3e})")
    n = a.shape[0]

    def value(x):
        x = np.asarray(x, dtype=float)
        return 0.5 * np.einsum("...i,ij,...j->...", x, a, x)

    def gradient(x):
        return np.einsum("ij,...j->...i", a, np.asarray(x, dtype=float))

    def hessian(x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(a, x.shape[:-1] + (n, n)).copy()

    def spectrum(x):
        x = np.asarray(x, dtype=float)
        lam_b = np.broadcast_to(lam, x.shape[:-1] + (n,)).copy()
        vec_b = np.broadcast_to(vec, x.shape[:-1] + (n, n)).copy()
        return lam_b, vec_b

    return Potential(n, value, gradient, hessian, kind="quadratic-form", spectrum=spectrum)


def make_custom(n, value, gradient=None, hessian=None, kind="custom"):
    """Custom potential; missing derivatives fall back to central differences.

    The finite-difference Hessian fallback sets fd_hessian so reports can be
    flagged; step is 1e-5 * (1 + |x|) per coordinate.
    """
    if gradient is None:
        def gradient(x, _v=value):
            x = np.asarray(x, dtype=float)
            g = np.empty_like(x)
            for i in range(n):
                h = _FD_HESS_STEP * (1.0 + np.abs(x[..., i]))
                xp = x.copy(); xp[..., i] += h
                xm = x.copy(); xm[..., i] -= h
                g[..., i] = (_v(xp) - _v(xm)) / (2.0 * h)
            return g
    fd = hessian is None
    if hessian is None:
        def hessian(x, _g=gradient):
            x = np.asarray(x, dtype=float)
            hmat = np.empty(x.shape[:-1] + (n, n))
            for i in range(n):
                h = _FD_HESS_STEP * (1.0 + np.abs(x[..., i]))
                xp = x.copy(); xp[..., i] += h
                xm = x.copy(); xm[..., i] -= h
                hmat[..., :, i] = (_g(xp) - _g(xm)) / (2.0 * h)[..., None]
            return 0.5 * (hmat + np.swapaxes(hmat, -1, -2))
    return Potential(n, value, gradient, hessian, kind=kind, fd_hessian=fd)


def regularize(p: Potential, eps: float) -> Potential:
    """Add eps |x|^2 to the potential: gradient += 2 eps x, Hessian += 2 eps Id."""
    if eps <= 0:
        raise ConvexityError(f"regularization strength must be positive, got {eps}")
    n = p.n

    def value(x, _f=p.value):
        x = np.asarray(x, dtype=float)
        return _f(x) + eps * np.sum(x * x, axis=-1)

    def gradient(x, _g=p.gradient):
        x = np.asarray(x, dtype=float)
        return _g(x) + 2.0 * eps * x

    def hessian(x, _h=p.hessian):
        x = np.asarray(x, dtype=float)
        return _h(x) + 2.0 * eps * np.eye(n)

    spectrum = None
    if p.spectrum is not None:
        def spectrum(x, _s=p.spectrum):
            lam, vec = _s(x)
            return lam + 2.0 * eps, vec

    return Potential(n, value, gradient, hessian, kind="regularized",
                     fd_hessian=p.fd_hessian, spectrum=spectrum)


# ---------------------------------------------------------------- measures

def make_piecewise_1d(breakpoints: Sequence[float], densities: Sequence[float]) -> Measure:
    """Step density on [b_0, b_K]; densities are rescaled to total mass 1.

    Zero cells are allowed (used by the degenerate-density demonstrations)
    as long as some cell carries mass.
    """
    b = np.asarray(breakpoints, dtype=float)
    d = np.asarray(densities, dtype=float)
    if b.ndim != 1 or len(b) < 2:
        raise InvalidDimension("need at least two breakpoints")
    if len(d) != len(b) - 1:
        raise InvalidDimension(f"need {len(b) - 1} densities for {len(b)} breakpoints, got {len(d)}")
    if np.any(np.diff(b) <= 0):
        raise DomainError("breakpoints must be strictly increasing")
    if np.any(d < 0):
        raise DomainError("densities must be nonnegative")
    widths = np.diff(b)
    mass = float(np.sum(d * widths))
    if mass <= 0:
        raise DomainError("at least one cell must carry positive mass")
    return Measure(breakpoints=b, densities=d / mass, normalization_residual=0.0,
                   meta={"form": "piecewise1d"})


def normalize(p: Potential, grid) -> Measure:
    """Smooth measure with logZ chosen so the grid mass of exp(-(f+logZ)) is 1."""
    from .discretize import integrate_values  # local import to avoid a cycle
    from .exceptions import QuadratureError

    fvals = p.value(grid.points()).reshape(grid.shape)
    vals = np.exp(-fvals)
    if not np.all(np.isfinite(vals)):
        bad = np.argwhere(~np.isfinite(vals))[0]
        raise QuadratureError(f"non-finite density at grid index {tuple(bad)} of {grid.shape}")
    mass = integrate_values(grid, vals)
    if not math.isfinite(mass) or mass <= 0:
        raise TruncationError(f"unnormalized mass {mass!r} is not a positive finite number")
    logZ = math.log(mass)
    mass_after = integrate_values(grid, np.exp(-(fvals + logZ)))
    m = Measure(potential=p, logZ=logZ, grid=grid, meta={"form": "smooth"},
                normalization_residual=abs(mass_after - 1.0))
    if m.normalization_residual > _MASS_TOL:
        raise TruncationError(
            f"normalization residual {m.normalization_residual:.3e} exceeds {_MASS_TOL}; "
            "widen the truncation box or refine the grid")
    return m


def smooth_measure(p: Potential, points_per_axis: int = 129,
                   tail_tol: float = 1e-10, rule: str = "trapezoid") -> Measure:
    """Truncate, grid, and normalize a potential in one step."""
    from .discretize import build_grid

    bounds = choose_truncation(p, tail_tol)
    return normalize(p, build_grid(bounds, points_per_axis, rule=rule))


def hessian_spectrum_at(p: Potential, x: np.ndarray):
    """(lambda_min, lambda_max, eigvecs) of Hess f at a point; rejects non-convexity.

    The eigendecomposition is validated by reconstruction to 1e-10 relative.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    h = p.hessian(x)
    if np.max(np.abs(h - np.swapaxes(h, -1, -2))) > 1e-10 * max(1.0, float(np.max(np.abs(h)))):
        raise ConvexityError("Hessian is not symmetric at the query point")
    lam, vec = np.linalg.eigh(h)
    recon = np.einsum("...ij,...j,...kj->...ik", vec, lam, vec)
    scale = max(1.0, float(np.max(np.abs(h))))
    if np.max(np.abs(recon - h)) > 1e-10 * scale:
        raise ConvexityError("eigendecomposition reconstruction error above 1e-10")
    lam_min = float(np.min(lam))
    if lam_min <= 1e-12:
        raise ConvexityError(f"Hessian least eigenvalue {lam_min:.3e} <= 1e-12: potential "
                             "is not strictly convex here (consider regularize)")
    return lam_min, float(np.max(lam)), vec


def choose_truncation(p: Potential, tail_tol: float, step: float = 0.25,
                      max_steps: int = 1_000_000):
    """Per-axis box [-R_i^-, R_i^+] with convexity tail bounds below tail_tol.

    Walks outward from the potential minimizer along each coordinate ray and
    applies the one-dimensional bound exp(-f(R)) / f'(R) <= tail_tol / (2n)
    per face.  Raises if the bound cannot be met within max_steps.
    """
    if not (0 < tail_tol < 1e-2):
        raise TruncationError(f"tail_tol must be in (0, 1e-2), got {tail_tol}")
    n = p.n
    x0 = _rough_minimizer(p)
    budget = tail_tol / (2.0 * n)
    bounds = []
    for axis in range(n):
        lo = _walk_ray(p, x0, axis, -1.0, budget, step, max_steps)
        hi = _walk_ray(p, x0, axis, +1.0, budget, step, max_steps)
        bounds.append((lo, hi))
    return bounds


def _rough_minimizer(p: Potential, iters: int = 200):
    """Few damped Newton steps from the origin; enough for box placement."""
    x = np.zeros(p.n)
    for _ in range(iters):
        g = p.gradient(x[None, :])[0]
        if np.max(np.abs(g)) < 1e-12:
            break
        h = p.hessian(x[None, :])[0]
        try:
            dx = np.linalg.solve(h, g)
        except np.linalg.LinAlgError:
            dx = g
        ndx = np.linalg.norm(dx)
        if ndx > 1.0:
            dx = dx / ndx
        x = x - dx
    return x


def _walk_ray(p, x0, axis, sign, budget, step, max_steps):
    t = step
    for _ in range(max_steps):
        x = x0.copy()
        x[axis] += sign * t
        f = float(p.value(x[None, :])[0])
        slope = sign * float(p.gradient(x[None, :])[0][axis])
        if slope > 0 and f + math.log(slope) >= -math.log(budget):
            # exp(-f)/slope <= budget
            return float(x[axis])
        t += step
    raise TruncationError(
        f"tail bound not reached along axis {axis} within {max_steps} steps; "
        "the potential may grow too slowly for this tolerance")
