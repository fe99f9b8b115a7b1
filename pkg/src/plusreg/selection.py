"""
Oracle estimator, selection metrics, penalty-level rules and noise estimation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional, Tuple

import numpy as np

from .design import StandardizedDesign
from .kkt import KktReport

__all__ = [
    "ModelTruth",
    "FitResult",
    "SelectionMetrics",
    "oracle_lse",
    "universal_lambda",
    "normal_cdf",
    "false_selection_bound",
    "unbiasedness_lambda_ceiling",
    "model_error",
    "selection_metrics",
    "estimate_sigma",
]


@dataclass(frozen=True)
class ModelTruth:
    """True coefficients of a linear model and derived support summaries."""

    beta: np.ndarray
    sigma: float = 1.0

    @property
    def support(self) -> Tuple[int, ...]:
        return tuple(int(j) for j in np.flatnonzero(self.beta))

    @property
    def d_o(self) -> int:
        return len(self.support)

    @property
    def beta_star(self) -> float:
        nz = np.abs(self.beta[self.beta != 0])
        return float(nz.min()) if nz.size else math.inf


@dataclass
class FitResult:
    """
    Coefficients at one penalty level.

    ``beta_hat`` lives on the standardized scale.  ``n_crossings`` counts the
    distinct path points at this level; more than one means the path folds
    back and the sparsest was chosen.
    """

    lam: float
    beta_hat: np.ndarray
    kkt: KktReport
    sigma_hat: Optional[float] = None
    n_crossings: int = 1

    @property
    def support(self) -> Tuple[int, ...]:
        return tuple(int(j) for j in np.flatnonzero(self.beta_hat))


def oracle_lse(design: StandardizedDesign, y, support: Iterable[int]) -> np.ndarray:
    """Least squares restricted to ``support``; zeros elsewhere."""
    y = np.asarray(y, dtype=float)
    A = np.asarray(sorted(set(int(j) for j in support)), dtype=int)
    beta = np.zeros(design.p)
    if A.size == 0:
        return beta
    XA = design.X[:, A]
    if np.linalg.matrix_rank(XA) < A.size:
        raise np.linalg.LinAlgError("oracle design X_A is rank deficient")
    coef, *_ = np.linalg.lstsq(XA, y, rcond=None)
    beta[A] = coef
    return beta


def universal_lambda(sigma: float, p: int, n: int) -> float:
    """``sigma * sqrt(2 log(p) / n)``."""
    if p < 2:
        raise ValueError("universal level needs p >= 2")
    if n < 1 or not sigma > 0:
        raise ValueError("need n >= 1 and sigma > 0")
    return sigma * math.sqrt(2.0 * math.log(p) / n)


def normal_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def false_selection_bound(p: int, d_o: int, n: int, lam: float) -> float:
    """Upper bound ``2 (p - d_o) Phi(-lam sqrt(n))`` on selecting a null variable."""
    if not p > d_o >= 0:
        raise ValueError("need p > d_o >= 0")
    return 2.0 * (p - d_o) * normal_cdf(-lam * math.sqrt(n))


def unbiasedness_lambda_ceiling(beta_star: float, gamma: float, p: int, n: int) -> float:
    """Largest ``lam / sqrt(log(p)/n)`` for which ``beta_star > gamma * lam``."""
    if not (gamma > 0 and beta_star > 0):
        raise ValueError("need gamma > 0 and beta_star > 0")
    return beta_star / (gamma * math.sqrt(math.log(p) / n))


def model_error(beta_hat, truth: ModelTruth | np.ndarray, Sigma) -> float:
    """Quadratic loss ``(beta_hat - beta)' Sigma (beta_hat - beta)``."""
    beta = truth.beta if isinstance(truth, ModelTruth) else np.asarray(truth, dtype=float)
    Sigma = np.asarray(Sigma, dtype=float)
    if not np.allclose(Sigma, Sigma.T, rtol=0, atol=1e-12):
        raise ValueError("Sigma must be symmetric")
    d = np.asarray(beta_hat, dtype=float) - beta
    return float(d @ Sigma @ d)


@dataclass(frozen=True)
class SelectionMetrics:
    tm: int
    cs: bool
    sign_consistent: bool
    false_inclusion: bool


def selection_metrics(fit: FitResult | np.ndarray, truth: ModelTruth) -> SelectionMetrics:
    """
    Total mistakes ``|A_hat symdiff A_o|``, correct selection and sign
    consistency (with ``sgn(0) = 0``).
    """
    beta_hat = fit.beta_hat if isinstance(fit, FitResult) else np.asarray(fit, dtype=float)
    sel = beta_hat != 0
    true = truth.beta != 0
    tm = int(np.sum(sel != true))
    signs = bool(np.array_equal(np.sign(beta_hat), np.sign(truth.beta)))
    return SelectionMetrics(tm, tm == 0, signs, bool(np.any(sel & ~true)))


def estimate_sigma(design: StandardizedDesign, y, fit: FitResult | np.ndarray) -> float:
    """
    Root mean residual square with ``df = |A_hat|``.
    """
    beta_hat = fit.beta_hat if isinstance(fit, FitResult) else np.asarray(fit, dtype=float)
    df = int(np.count_nonzero(beta_hat))
    if df >= design.n:
        raise ValueError(f"degrees of freedom {df} leave no residual information (n={design.n})")
    r = np.asarray(y, dtype=float) - design.X @ beta_hat
    return math.sqrt(float(r @ r) / (design.n - df))
