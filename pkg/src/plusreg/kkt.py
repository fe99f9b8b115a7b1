"""
KKT residuals for penalized least squares with spline penalties.

The original-scale system at level ``lam`` reads

    x_j'(y - X beta)/n = sgn(beta_j) rho'(|beta_j|; lam)   if beta_j != 0
    |x_j'(y - X beta)/n| <= lam                            if beta_j == 0

and with ``tau = 1/lam``, ``b = tau*beta``, ``z = tau*z_star`` it becomes the
unit-level system ``z_j - chi_j'b = sgn(b_j) rho_m'(|b_j|)``, ``|z_j - chi_j'b| <= 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .design import StandardizedDesign
from .penalty import QuadSplinePenalty

__all__ = [
    "KKT_TOL",
    "KktReport",
    "kkt_report",
    "kkt_report_gram",
    "rescaled_kkt_report",
    "local_min_certificate",
]

KKT_TOL = 1e-8


@dataclass(frozen=True)
class KktReport:
    """
    Worst violations of the KKT system.

    ``boundary`` lists inactive coordinates whose correlation sits on the
    threshold within ``tol``; local-minimality is undecided there.
    """

    max_active_residual: float
    max_inactive_excess: float
    satisfied: bool
    tol: float
    boundary: Tuple[int, ...] = ()


def _report(corr, coef, unit_deriv, level, tol) -> KktReport:
    active = coef != 0
    if active.any():
        target = np.sign(coef[active]) * unit_deriv(np.abs(coef[active]))
        act = float(np.max(np.abs(corr[active] - target)))
    else:
        act = 0.0
    inactive = ~active
    if inactive.any():
        excess = np.abs(corr[inactive]) - level
        ina = float(np.max(excess))
        boundary = tuple(int(j) for j in np.flatnonzero(inactive)[np.abs(excess) <= tol])
    else:
        ina = -math.inf
        boundary = ()
    return KktReport(act, ina, bool(act <= tol and ina <= tol), tol, boundary)


def kkt_report(
    design: StandardizedDesign,
    y,
    beta,
    pen: QuadSplinePenalty,
    lam: float,
    tol: float = KKT_TOL,
) -> KktReport:
    """KKT residuals at ``beta`` for level ``lam`` on the original scale."""
    if not lam > 0:
        raise ValueError("lam must be positive")
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (design.p,):
        raise ValueError(f"beta must have shape ({design.p},), got {beta.shape}")
    return kkt_report_gram(design.gram, design.z_star(y), beta, pen, lam, tol)


def kkt_report_gram(gram, z_star, beta, pen: QuadSplinePenalty, lam: float, tol: float = KKT_TOL) -> KktReport:
    """Same as :func:`kkt_report` from the sufficient statistics ``X'X/n`` and ``X'y/n``."""
    beta = np.asarray(beta, dtype=float)
    corr = np.asarray(z_star, dtype=float) - np.asarray(gram, dtype=float) @ beta
    return _report(corr, beta, lambda t: pen.deriv(t, lam), lam, tol)


def rescaled_kkt_report(
    gram,
    z_star,
    b,
    tau: float,
    pen: QuadSplinePenalty,
    tol: float = KKT_TOL,
) -> KktReport:
    """
    KKT residuals of the unit-level system at ``(tau, b)``.

    The residual ``tau z* - G b`` is a difference of terms of size about
    ``tau max|z*|``, so it cannot be resolved below rounding at that scale.
    ``tol`` is therefore applied as ``tol * max(1, tau max|z*|)``: absolute up
    to the first activation, and equivalent to the original-scale check at
    ``tol`` relative to ``max|z*|`` beyond it.  The effective value is
    stored in the report.
    """
    if not tau > 0:
        raise ValueError("tau must be positive")
    gram = np.asarray(gram, dtype=float)
    z_star = np.asarray(z_star, dtype=float)
    b = np.asarray(b, dtype=float)
    p = z_star.shape[0]
    if gram.shape != (p, p) or b.shape != (p,):
        raise ValueError("dimension mismatch between gram, z_star and b")
    corr = tau * z_star - gram @ b
    scale = max(1.0, tau * float(np.max(np.abs(z_star), initial=0.0)))
    return _report(corr, b, pen.unit_deriv, 1.0, tol * scale)


def local_min_certificate(
    design: StandardizedDesign,
    beta,
    pen: QuadSplinePenalty,
    lam: float,
    tol: float = KKT_TOL,
) -> Tuple[bool, float]:
    """
    Positive definiteness of ``X_A'X_A/n + diag(rho''(|beta_j|; lam))`` on the
    active set.  Coordinates on a knot use the more concave side.

    Returns ``(certified, smallest_eigenvalue)``; an empty active set gives
    ``(True, inf)``.
    """
    beta = np.asarray(beta, dtype=float)
    A = np.flatnonzero(beta)
    if A.size == 0:
        return True, math.inf
    curv = pen.curvature(np.abs(beta[A]), lam, conservative=True)
    M = design.gram[np.ix_(A, A)] + np.diag(np.atleast_1d(curv))
    ev = float(np.linalg.eigvalsh(M)[0])
    return bool(ev > tol), ev
