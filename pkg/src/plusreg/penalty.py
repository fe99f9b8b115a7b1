"""
Quadratic-spline penalties in unit scale.

A penalty is stored as a unit-scale spline ``rho_m`` whose derivative is
piecewise linear on the knots ``0 = t_0 < t_1 < ... < t_{m-1}``.  The penalty
at level ``lam`` is recovered through the scaling law

    rho(t; lam) = lam**2 * rho_m(t / lam)

so ``deriv(t, lam) = lam * rho_m'(t / lam)`` and the curvature is scale free.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

__all__ = [
    "QuadSplinePenalty",
    "make_l1",
    "make_mcp",
    "make_scad",
    "make_penalty",
    "soft_threshold",
    "firm_threshold",
    "scad_threshold",
]


@dataclass(frozen=True)
class QuadSplinePenalty:
    """
    Unit-scale quadratic spline penalty.

    Parameters
    ----------
    name : str
        Family label (``"l1"``, ``"mcp"``, ``"scad"`` or free text).
    knots : tuple of float
        Ascending knots, ``knots[0] == 0``.  Segment ``k`` covers
        ``[knots[k], knots[k+1])``; the last one is unbounded.
    deriv_segments : tuple of (float, float)
        ``(intercept, slope)`` of the derivative on each segment.
    """

    name: str
    knots: Tuple[float, ...]
    deriv_segments: Tuple[Tuple[float, float], ...]

    def __post_init__(self):
        knots = tuple(float(k) for k in self.knots)
        segs = tuple((float(a), float(s)) for a, s in self.deriv_segments)
        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "deriv_segments", segs)
        if not knots or knots[0] != 0.0:
            raise ValueError("first knot must be 0")
        if any(b <= a for a, b in zip(knots, knots[1:])):
            raise ValueError("knots must be strictly ascending")
        if len(segs) != len(knots):
            raise ValueError("need one derivative segment per knot")
        if segs[0][0] != 1.0:
            raise ValueError("derivative at 0+ must equal 1")
        # continuity of the derivative at interior knots
        for k in range(1, len(knots)):
            left = segs[k - 1][0] + segs[k - 1][1] * knots[k]
            right = segs[k][0] + segs[k][1] * knots[k]
            if abs(left - right) > 1e-12 * max(1.0, abs(left)):
                raise ValueError(f"derivative is discontinuous at knot {knots[k]}")
        if segs[-1][1] != 0.0:
            raise ValueError("last segment must have zero slope")
        # cumulative spline values at the knots
        vals = [0.0]
        for k in range(1, len(knots)):
            a, s = segs[k - 1]
            t0, t1 = knots[k - 1], knots[k]
            vals.append(vals[-1] + a * (t1 - t0) + 0.5 * s * (t1 * t1 - t0 * t0))
        object.__setattr__(self, "_knot_values", tuple(vals))

    # ------------------------------------------------------------------
    # structural properties
    # ------------------------------------------------------------------
    @property
    def m(self) -> int:
        """Number of knots, including 0."""
        return len(self.knots)

    @property
    def gamma(self) -> float:
        """Unit-scale unbiasedness threshold (``inf`` when never flat)."""
        a, s = self.deriv_segments[-1]
        if a == 0.0 and s == 0.0:
            return self.knots[-1]
        return math.inf

    def max_concavity(self) -> float:
        """Largest value of ``-rho''`` over ``t > 0``; identical at every level."""
        return max(0.0, max(-s for _, s in self.deriv_segments))

    def segment_of(self, t):
        """0-based segment index of unit-scale magnitudes ``t`` (right-limit)."""
        idx = np.searchsorted(self.knots, t, side="right") - 1
        return np.clip(idx, 0, self.m - 1)

    def upper_knot(self, k: int) -> float:
        return self.knots[k + 1] if k + 1 < self.m else math.inf

    # ------------------------------------------------------------------
    # unit-scale evaluation
    # ------------------------------------------------------------------
    def unit_value(self, t):
        t = np.asarray(t, dtype=float)
        k = self.segment_of(t)
        knots = np.asarray(self.knots)[k]
        a = np.asarray([seg[0] for seg in self.deriv_segments])[k]
        s = np.asarray([seg[1] for seg in self.deriv_segments])[k]
        base = np.asarray(self._knot_values)[k]
        out = base + a * (t - knots) + 0.5 * s * (t * t - knots * knots)
        return out if out.ndim else float(out)

    def unit_deriv(self, t):
        t = np.asarray(t, dtype=float)
        k = self.segment_of(t)
        a = np.asarray([seg[0] for seg in self.deriv_segments])[k]
        s = np.asarray([seg[1] for seg in self.deriv_segments])[k]
        out = a + s * t
        return out if out.ndim else float(out)

    def unit_curvature(self, t, conservative: bool = False):
        """
        Second derivative of ``rho_m`` at unit-scale magnitudes ``t``.

        With ``conservative=True`` a point sitting exactly on an interior knot
        takes the more concave of its two adjacent slopes.
        """
        t = np.asarray(t, dtype=float)
        slopes = np.asarray([seg[1] for seg in self.deriv_segments])
        k = self.segment_of(t)
        out = slopes[k]
        if conservative and self.m > 1:
            on_knot = np.isin(t, np.asarray(self.knots[1:])) & (k >= 1)
            left = slopes[np.maximum(k - 1, 0)]
            out = np.where(on_knot, np.minimum(out, left), out)
        return out if out.ndim else float(out)

    # ------------------------------------------------------------------
    # scaled evaluation
    # ------------------------------------------------------------------
    def value(self, t, lam: float = 1.0):
        """``rho(t; lam)``; zero for ``lam == 0``."""
        t = np.asarray(t, dtype=float)
        if np.any(t < 0):
            raise ValueError("penalty argument must be nonnegative")
        if lam < 0:
            raise ValueError("lam must be nonnegative")
        if lam == 0:
            out = np.zeros_like(t)
            return out if out.ndim else 0.0
        return lam * lam * self.unit_value(t / lam)

    def deriv(self, t, lam: float = 1.0):
        """``rho'(t; lam)`` for ``t > 0``, right-limit at knots."""
        t = np.asarray(t, dtype=float)
        if np.any(t <= 0):
            raise ValueError("deriv needs t > 0; use deriv_zero_plus for the limit at 0")
        if lam < 0:
            raise ValueError("lam must be nonnegative")
        if lam == 0:
            out = np.zeros_like(t)
            return out if out.ndim else 0.0
        return lam * self.unit_deriv(t / lam)

    def deriv_zero_plus(self, lam: float = 1.0) -> float:
        """``rho'(0+; lam)``, which equals ``lam`` for every member of the family."""
        return float(lam) * self.deriv_segments[0][0]

    def curvature(self, t, lam: float = 1.0, conservative: bool = False):
        """``rho''(t; lam)``; equal to the unit curvature at ``t / lam``."""
        if lam <= 0:
            raise ValueError("lam must be positive")
        return self.unit_curvature(np.asarray(t, dtype=float) / lam, conservative)


def make_l1() -> QuadSplinePenalty:
    return QuadSplinePenalty("l1", (0.0,), ((1.0, 0.0),))


def make_mcp(gamma: float) -> QuadSplinePenalty:
    """Minimax concave penalty with derivative ``(1 - t/gamma)_+``."""
    if not gamma > 0:
        raise ValueError(f"MCP needs gamma > 0, got {gamma}")
    gamma = float(gamma)
    return QuadSplinePenalty("mcp", (0.0, gamma), ((1.0, -1.0 / gamma), (0.0, 0.0)))


def make_scad(gamma: float) -> QuadSplinePenalty:
    """SCAD penalty; flat slope up to 1, linear decay to 0 at ``gamma``."""
    if not gamma > 2:
        raise ValueError(f"SCAD needs gamma > 2, got {gamma}")
    gamma = float(gamma)
    return QuadSplinePenalty(
        "scad",
        (0.0, 1.0, gamma),
        ((1.0, 0.0), (gamma / (gamma - 1.0), -1.0 / (gamma - 1.0)), (0.0, 0.0)),
    )


def make_penalty(family: str, gamma: float | None = None) -> QuadSplinePenalty:
    """Build a penalty from a family name (``l1``/``lasso``, ``mcp``, ``scad``)."""
    family = family.lower()
    if family in ("l1", "lasso"):
        return make_l1()
    if gamma is None:
        raise ValueError(f"{family} needs gamma")
    if family in ("mcp", "mc+"):
        return make_mcp(gamma)
    if family == "scad":
        return make_scad(gamma)
    raise ValueError(f"unknown penalty family {family!r}")


# ----------------------------------------------------------------------
# Closed-form univariate minimizers of 0.5*(b - z)**2 + rho(|b|; lam)
# ----------------------------------------------------------------------
def soft_threshold(z, lam):
    z = np.asarray(z, dtype=float)
    return np.sign(z) * np.maximum(np.abs(z) - lam, 0.0)


def firm_threshold(z, lam, gamma):
    """MCP thresholding rule; requires ``gamma > 1``."""
    if not gamma > 1:
        raise ValueError("firm thresholding needs gamma > 1")
    z = np.asarray(z, dtype=float)
    az = np.abs(z)
    mid = np.sign(z) * (az - lam) / (1.0 - 1.0 / gamma)
    return np.where(az <= lam, 0.0, np.where(az <= gamma * lam, mid, z))


def scad_threshold(z, lam, gamma):
    """SCAD thresholding rule; requires ``gamma > 2``."""
    if not gamma > 2:
        raise ValueError("SCAD thresholding needs gamma > 2")
    z = np.asarray(z, dtype=float)
    az = np.abs(z)
    low = np.sign(z) * np.maximum(az - lam, 0.0)
    mid = ((gamma - 1.0) * z - np.sign(z) * gamma * lam) / (gamma - 2.0)
    return np.where(az <= 2 * lam, low, np.where(az <= gamma * lam, mid, z))
