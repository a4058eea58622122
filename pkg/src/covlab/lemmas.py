"""Standalone algebraic lemmas and the one-step induction check.

The two scalar lemmas (a matrix power bound and a quotient convexity
bound) are exercised directly and by randomized suites.  The induction
check restricts a smooth split measure to a finite 2-D table and verifies,
at every y-node, the slice covariance matrix against its diffusion bound,
the determinant consequence, and the composed scalar inequality.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .conditional import SplitMeasure
from .discretize import Field
from .exceptions import DomainError, InvalidDimension
from .inequalities import InequalityReport, TOL_REPORT, _report

_EIG_TOL = 1e-8


def check_matrix_power_lemma(A: np.ndarray, v: np.ndarray, p: float) -> tuple:
    """|A^{1/p} v|^p <= |v|^{p-2} |A^{1/2} v|^2 for symmetric positive A, p >= 2."""
    A = np.asarray(A, dtype=float)
    v = np.asarray(v, dtype=float).reshape(-1)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] != v.size:
        raise InvalidDimension(f"matrix {A.shape} does not act on vector of size {v.size}")
    scale = float(np.max(np.abs(A)) or 1.0)
    if float(np.max(np.abs(A - A.T))) > 1e-10 * scale:
        raise DomainError("matrix must be symmetric")
    if not (np.isfinite(p) and p >= 2.0):
        raise DomainError(f"exponent must be a finite real >= 2, got {p}")
    if not np.any(v):
        raise DomainError("vector must be nonzero")
    w, V = np.linalg.eigh(A)
    if w[0] <= 0:
        raise DomainError(f"matrix must be positive definite, least eigenvalue {w[0]}")
    c2 = (V.T @ v) ** 2
    lhs = float(np.sum(w ** (2.0 / p) * c2) ** (p / 2.0))
    rhs = float(np.sum(c2) ** (p / 2.0 - 1.0) * np.sum(w * c2))
    return lhs, rhs, bool(lhs <= rhs + 1e-12 * rhs)


def check_quotient_convexity(a: float, b: float, alpha: float, beta: float) -> tuple:
    """a^2/alpha <= b^2/beta + (a-b)^2/(alpha-beta) for alpha > beta > 0."""
    if not (alpha > beta > 0):
        raise DomainError(f"need alpha > beta > 0, got alpha={alpha}, beta={beta}")
    lhs = a ** 2 / alpha
    rhs = b ** 2 / beta + (a - b) ** 2 / (alpha - beta)
    return lhs, rhs, bool(lhs <= rhs + 1e-12 * (1.0 + rhs))


def random_spd(rng: np.random.Generator, dim: int = 3) -> np.ndarray:
    """SPD matrix: orthogonal factor from QR, eigenvalues log-uniform in [1e-3, 1e3]."""
    q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
    q = q * np.sign(np.diag(r))
    lam = 10.0 ** rng.uniform(-3.0, 3.0, size=dim)
    return (q * lam) @ q.T


def matrix_power_suite(cases: int = 10_000, seed: int = 0, dim: int = 3) -> dict:
    """Randomized sweep of the matrix power lemma; per-case counter-derived seeds."""
    worst = np.inf
    failures = 0
    for k in range(cases):
        rng = np.random.default_rng([seed, k])
        A = random_spd(rng, dim)
        v = rng.standard_normal(dim)
        p = rng.uniform(2.0, 32.0)
        lhs, rhs, ok = check_matrix_power_lemma(A, v, p)
        failures += not ok
        if rhs > 0:
            worst = min(worst, (rhs - lhs) / rhs)
    return {"cases": cases, "failures": failures, "worst_relative_slack": float(worst),
            "all_hold": failures == 0, "seed": seed, "dim": dim}


def quotient_convexity_suite(cases: int = 10_000, seed: int = 0) -> dict:
    """Randomized sweep of the quotient convexity lemma."""
    worst = np.inf
    failures = 0
    for k in range(cases):
        rng = np.random.default_rng([seed, k])
        a, b = rng.standard_normal(2) * 10.0 ** rng.uniform(-2, 2)
        beta, gap = 10.0 ** rng.uniform(-3, 3, size=2)
        lhs, rhs, ok = check_quotient_convexity(a, b, beta + gap, beta)
        failures += not ok
        worst = min(worst, (rhs - lhs) / (1.0 + rhs))
    return {"cases": cases, "failures": failures, "worst_relative_slack": float(worst),
            "all_hold": failures == 0, "seed": seed}


@dataclass
class DiscreteMeasure2D:
    """Finite restriction of a split measure: nodes, weights, and the tables
    the induction brackets are built from.  Weights are renormalized to sum
    to 1 exactly so slice moments are scale-free."""

    y: np.ndarray
    z: np.ndarray
    weights: np.ndarray            # (Y, Z), positive, sums to 1
    h: np.ndarray
    h_y: np.ndarray
    h_z: np.ndarray
    f_y: np.ndarray
    f_yy: np.ndarray
    f_yz: np.ndarray
    f_zz: np.ndarray

    def __post_init__(self):
        if np.any(self.weights < 0):
            raise DomainError("weights must be positive")
        total = float(np.sum(self.weights))
        if abs(total - 1.0) > 1e-12:
            raise DomainError(f"weights must sum to 1, got {total!r}")

    @classmethod
    def from_split(cls, sm: SplitMeasure, h: Field) -> "DiscreteMeasure2D":
        if sm.m_y != 1 or sm.joint.n != 2:
            raise InvalidDimension("induction tables need one y and one z coordinate")
        g = sm.grid
        rho2, wy, wz, _nu, _ = sm._tables()
        w = rho2 * np.multiply.outer(wy, wz)
        w = w / float(np.sum(w))
        grad = h.gradient() if h.grad is not None else g.gradient(h.values)
        pts = g.points()
        fgrad = sm.joint.potential.gradient(pts)
        hess = sm.joint.potential.hessian(pts)
        Y, Z = w.shape
        return cls(
            y=g.axes[0], z=g.axes[1], weights=w,
            h=np.asarray(h.values, dtype=float),
            h_y=grad[0], h_z=grad[1],
            f_y=fgrad[:, 0].reshape(Y, Z),
            f_yy=hess[:, 0, 0].reshape(Y, Z),
            f_yz=hess[:, 0, 1].reshape(Y, Z),
            f_zz=hess[:, 1, 1].reshape(Y, Z),
        )


def verify_inductive_step(sm: SplitMeasure, h: Field,
                          tol: float = TOL_REPORT) -> InequalityReport:
    """One induction step at a scalar y: per y-node, the slice covariance
    matrix of (h, f_y) against its diffusion bound, the determinant
    consequence, the re-verified slice variance bounds, and the composed
    scalar inequality; the report carries the worst node.
    """
    dm = DiscreteMeasure2D.from_split(sm, h)
    row = np.sum(dm.weights, axis=1)
    cw = dm.weights / row[:, None]

    def smean(table):
        return np.sum(cw * table, axis=1)

    Eh = smean(dm.h)
    var_h = smean(dm.h ** 2) - Eh ** 2
    Efy = smean(dm.f_y)
    var_fy = smean(dm.f_y ** 2) - Efy ** 2
    cov_hfy = smean(dm.h * dm.f_y) - Eh * Efy
    Ehy = smean(dm.h_y)
    Efyy = smean(dm.f_yy)

    bl_hh = smean(dm.h_z ** 2 / dm.f_zz)
    bl_hf = smean(dm.h_z * dm.f_yz / dm.f_zz)
    bl_ff = smean(dm.f_yz ** 2 / dm.f_zz)

    a = Ehy - cov_hfy
    alpha = Efyy - var_fy
    b = Ehy - bl_hf
    beta = Efyy - bl_ff

    bad = alpha <= 0
    safe_alpha = np.where(bad, 1.0, alpha)
    B = var_h + a ** 2 / safe_alpha
    goal = bl_hh + b ** 2 / np.maximum(beta, 1e-300)

    d_hh = bl_hh - var_h
    d_hf = bl_hf - cov_hfy
    d_ff = bl_ff - var_fy
    half_tr = 0.5 * (d_hh + d_ff)
    min_eig = half_tr - np.sqrt((0.5 * (d_hh - d_ff)) ** 2 + d_hf ** 2)
    det = d_hh * d_ff - d_hf ** 2

    ok = ~bad
    margins = (goal - B)[ok]
    k_local = int(np.argmin(margins))
    k = int(np.flatnonzero(ok)[k_local])
    meta = {
        "nodes": int(ok.size),
        "flagged_nodes": int(np.sum(bad)),
        "min_eig_worst": float(np.min(min_eig)),
        "det_worst": float(np.min(det)),
        "slice_var_h_margin": float(np.min(d_hh)),
        "slice_var_fy_margin": float(np.min(d_ff)),
        "psd_ok": bool(np.min(min_eig) >= -_EIG_TOL),
        "worst_node": k,
        "worst_margin": float(goal[k] - B[k]),
    }
    return _report("inductive-step", sm.joint.n, float(B[k]), float(goal[k]),
                   tol=tol, meta=meta)
