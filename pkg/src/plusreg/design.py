"""
Standardized designs and eigenvalue diagnostics.

Columns are scaled to ``||x_j||**2 / n == 1``.  The convexity diagnostics
compare the maximum concavity of a penalty with smallest eigenvalues of
principal submatrices of the Gram matrix ``X'X / n``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .penalty import QuadSplinePenalty

__all__ = [
    "StandardizedDesign",
    "SparseRieszBounds",
    "ConvexityCheck",
    "standardize",
    "restricted_min_eigen",
    "sparse_riesz_scan",
    "global_convexity_check",
    "sparse_convexity_check",
    "EIGEN_TOL",
    "DEFAULT_SUBSET_BUDGET",
]

EIGEN_TOL = 1e-10
DEFAULT_SUBSET_BUDGET = 10**6
_CHUNK = 20000


class DesignError(ValueError):
    """Raised for degenerate designs (zero columns, rank deficiency)."""


@dataclass(frozen=True)
class StandardizedDesign:
    """
    Design matrix with unit-norm columns in the ``||x||**2/n`` sense.

    Attributes
    ----------
    X : ndarray, shape (n, p)
    col_scales : ndarray, shape (p,)
        ``||x_j|| / sqrt(n)`` of the raw columns; raw-scale coefficients are
        ``beta / col_scales``.
    gram : ndarray, shape (p, p)
        ``X'X / n``.
    """

    X: np.ndarray
    col_scales: np.ndarray
    gram: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def z_star(self, y) -> np.ndarray:
        """``X'y / n``."""
        y = np.asarray(y, dtype=float)
        if y.shape != (self.n,):
            raise ValueError(f"y must have shape ({self.n},), got {y.shape}")
        return self.X.T @ y / self.n

    def to_raw_scale(self, beta) -> np.ndarray:
        return np.asarray(beta, dtype=float) / self.col_scales


def standardize(raw) -> StandardizedDesign:
    """Scale each column of ``raw`` to ``||x_j||**2 / n = 1``."""
    raw = np.asarray(raw, dtype=float)
    if raw.ndim != 2:
        raise ValueError("design must be a 2-d array")
    n, _ = raw.shape
    norms = np.linalg.norm(raw, axis=0)
    bad = np.flatnonzero(norms < 1e-12 * math.sqrt(n))
    if bad.size:
        raise DesignError(f"column {int(bad[0])} is zero or numerically zero")
    scales = norms / math.sqrt(n)
    X = raw / scales
    gram = X.T @ X / n
    gram = 0.5 * (gram + gram.T)
    np.fill_diagonal(gram, 1.0)
    X.setflags(write=False)
    gram.setflags(write=False)
    return StandardizedDesign(X=X, col_scales=scales, gram=gram)


def _clamp(vals):
    vals = np.asarray(vals, dtype=float)
    return np.where(np.abs(vals) < EIGEN_TOL, 0.0, vals)


def restricted_min_eigen(design: StandardizedDesign | np.ndarray, A: Iterable[int]) -> float:
    """Smallest eigenvalue of the principal submatrix of the Gram matrix on ``A``."""
    gram = design.gram if isinstance(design, StandardizedDesign) else np.asarray(design)
    idx = np.asarray(sorted(set(int(a) for a in A)), dtype=int)
    if idx.size == 0:
        raise ValueError("index set must be nonempty")
    sub = gram[np.ix_(idx, idx)]
    return float(_clamp(np.linalg.eigvalsh(sub)[0]))


@dataclass(frozen=True)
class SparseRieszBounds:
    """Extreme eigenvalues of ``X_A'X_A/n`` over supports ``|A| <= d_star``.

    ``certified`` is False when the bounds come from sampled subsets; they
    are then only an inner estimate of the true range.
    """

    d_star: int
    c_lower: float
    c_upper: float
    certified: bool
    n_subsets: int


def _subset_extremes(gram, subsets):
    lo, hi = math.inf, -math.inf
    count = 0
    batch = []

    def flush():
        nonlocal lo, hi
        idx = np.asarray(batch, dtype=int)
        subs = gram[idx[:, :, None], idx[:, None, :]]
        ev = np.linalg.eigvalsh(subs)
        lo = min(lo, float(ev[:, 0].min()))
        hi = max(hi, float(ev[:, -1].max()))
        batch.clear()

    for A in subsets:
        batch.append(A)
        count += 1
        if len(batch) >= _CHUNK:
            flush()
    if batch:
        flush()
    return lo, hi, count


def sparse_riesz_scan(
    design: StandardizedDesign,
    d_star: int,
    mode: str = "exhaustive",
    n_samples: int = 1000,
    budget: int = DEFAULT_SUBSET_BUDGET,
    seed: int = 0,
) -> SparseRieszBounds:
    """
    Scan principal submatrices of size ``d_star`` for extreme eigenvalues.

    By eigenvalue interlacing the extremes over ``|A| <= d_star`` are attained
    at ``|A| == d_star``, so only those subsets are visited.

    Parameters
    ----------
    mode : {"exhaustive", "sampled"}
        ``"sampled"`` draws ``n_samples`` uniform subsets and returns an
        uncertified estimate.
    budget : int
        Maximum number of subsets for exhaustive mode.
    """
    p = design.p
    if not 1 <= d_star <= p:
        raise ValueError(f"d_star must lie in [1, {p}], got {d_star}")
    gram = np.asarray(design.gram)
    if mode == "exhaustive":
        total = math.comb(p, d_star)
        if total > budget:
            raise ValueError(
                f"exhaustive scan needs {total} subsets (budget {budget}); use sampled mode"
            )
        lo, hi, count = _subset_extremes(gram, itertools.combinations(range(p), d_star))
        certified = True
    elif mode == "sampled":
        if n_samples < 1:
            raise ValueError("n_samples must be positive")
        rng = np.random.default_rng(seed)
        subsets = (np.sort(rng.choice(p, size=d_star, replace=False)) for _ in range(n_samples))
        lo, hi, count = _subset_extremes(gram, subsets)
        certified = False
    else:
        raise ValueError(f"unknown mode {mode!r}")
    lo, hi = float(_clamp(lo)), float(_clamp(hi))
    return SparseRieszBounds(d_star, lo, hi, certified, count)


@dataclass(frozen=True)
class ConvexityCheck:
    holds: bool
    margin: float
    certified: bool = True


def global_convexity_check(design: StandardizedDesign, pen: QuadSplinePenalty) -> ConvexityCheck:
    """``kappa < c_min(X'X/n)``; the margin is ``c_min - kappa``."""
    kappa = pen.max_concavity()
    if design.p > design.n:
        cmin = 0.0
    else:
        cmin = float(_clamp(np.linalg.eigvalsh(design.gram)[0]))
    margin = cmin - kappa
    return ConvexityCheck(bool(margin > 0), margin)


def sparse_convexity_check(
    design: StandardizedDesign,
    pen: QuadSplinePenalty,
    d_star: int,
    mode: str = "exhaustive",
    **scan_kw,
) -> ConvexityCheck:
    """``kappa`` below the smallest restricted eigenvalue over ``|A| = d_star``."""
    bounds = sparse_riesz_scan(design, d_star, mode=mode, **scan_kw)
    margin = bounds.c_lower - pen.max_concavity()
    return ConvexityCheck(bool(margin > 0), margin, bounds.certified)
