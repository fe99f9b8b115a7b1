"""
Main-branch tracking of the KKT solution set (the PLUS path).

Work in unit-level coordinates ``tau = 1/lam`` and ``b = tau * beta``.  Each
coordinate ``j`` lives on a piecewise-linear curve in the ``(b_j, c_j)``
plane, where ``c_j = tau*z_j - chi_j'b`` is its correlation:

* piece ``0``: ``b_j = 0`` and ``-1 <= c_j <= 1``;
* piece ``+-k`` (``k = 1..m``): ``c_j = sgn(b_j) rho_m'(|b_j|)`` with ``|b_j|``
  in the k-th spline interval.

A facet fixes one piece per coordinate.  Inside it the equations are affine,
the solution set on the ray ``z = tau * z_star`` is a line, and the path
moves along it until some coordinate reaches the end of its piece.  The path
then continues into the neighbouring piece in the same direction along that
coordinate's curve; this fixes the orientation of every segment and lets
``tau`` decrease where the surface folds.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Tuple

import numpy as np
import scipy.linalg

from .design import StandardizedDesign
from .kkt import KKT_TOL, kkt_report_gram
from .penalty import QuadSplinePenalty
from .selection import FitResult

__all__ = [
    "Event",
    "PathBreakpoint",
    "SolutionPath",
    "PathError",
    "PenaltyRangeError",
    "compute_path",
    "trace_path",
    "solve_at_lambda",
    "path_to_coefficients",
    "write_path_csv",
    "read_path_csv",
    "DEFAULT_MAX_STEPS",
    "EVENT_TOL",
    "JITTER",
]

DEFAULT_MAX_STEPS = 10_000
EVENT_TOL = 1e-10
JITTER = 1e-9
_JITTER_SEED = 20080601

# tie-break priority among simultaneous events
_PRIORITY = {"deactivate": 0, "knot_cross": 1, "activate": 2}
_KIND = {v: k for k, v in _PRIORITY.items()}


class PathError(RuntimeError):
    """The path cannot be continued (degenerate junction)."""


class PenaltyRangeError(ValueError):
    """Requested penalty level lies below the range covered by the path."""


@dataclass(frozen=True)
class Event:
    kind: str
    j: Optional[int] = None
    knot: Optional[int] = None

    def label(self, one_based: bool = False) -> str:
        if self.j is None:
            return self.kind
        j = self.j + 1 if one_based else self.j
        if self.knot is None:
            return f"{self.kind}({j})"
        return f"{self.kind}({j},{self.knot})"


@dataclass(frozen=True)
class PathBreakpoint:
    """
    Junction of two path segments.

    ``facet`` is the facet of the segment ending here: ``facet[j] == 0`` for
    an inactive coordinate, ``+-k`` when ``b_j`` has that sign and ``|b_j|``
    lies in the k-th spline interval.
    """

    step: int
    tau: float
    b: np.ndarray
    facet: Tuple[int, ...]
    event: Event


@dataclass
class SolutionPath:
    """
    Breakpoints of the main branch plus the data needed to evaluate it.

    When ``termination == "fit"`` the last segment is a ray: it continues past
    the final breakpoint indefinitely with ``tau`` increasing.
    """

    breakpoints: List[PathBreakpoint]
    termination: str
    gram: np.ndarray = field(repr=False)
    z_star: np.ndarray = field(repr=False)
    penalty: QuadSplinePenalty
    fit_residual: float = math.nan
    jittered: bool = False

    @property
    def steps_used(self) -> int:
        return len(self.breakpoints) - 1

    @property
    def taus(self) -> np.ndarray:
        return np.array([bp.tau for bp in self.breakpoints])

    @property
    def coefs(self) -> np.ndarray:
        """Rescaled coefficients ``b`` at each breakpoint, shape (steps+1, p)."""
        return np.array([bp.b for bp in self.breakpoints])

    @property
    def max_tau(self) -> float:
        if self.termination == "fit":
            return math.inf
        return float(self.taus.max())


class _Tracker:
    """Mutable state of one path computation."""

    def __init__(self, gram, z_star, pen: QuadSplinePenalty, max_steps: int, fit_tol: float, tau_max: float = math.inf):
        self.tau_max = tau_max
        self.G = gram
        self.z = z_star
        self.pen = pen
        self.p = z_star.shape[0]
        self.max_steps = max_steps
        self.fit_tol = fit_tol
        self.knots = np.asarray(pen.knots)
        self.icpt = np.asarray([a for a, _ in pen.deriv_segments])
        self.slope = np.asarray([s for _, s in pen.deriv_segments])

    # -- facet algebra -------------------------------------------------
    def _facet_system(self, eta, A):
        """``M b_A = tau z_A - rhs`` on the active set."""
        seg = np.abs(eta[A]) - 1
        sgn = np.sign(eta[A]).astype(float)
        M = self.G[np.ix_(A, A)] + np.diag(self.slope[seg])
        rhs = sgn * self.icpt[seg]
        return M, rhs

    def _direction(self, eta, A):
        """Unit null vector ``(dtau, db_A)`` of ``[z_A, -M]``."""
        if A.size == 0:
            return 1.0, np.zeros(0)
        M, _ = self._facet_system(eta, A)
        zA = self.z[A]
        try:
            lu = scipy.linalg.lu_factor(M, check_finite=False)
            w = scipy.linalg.lu_solve(lu, zA, check_finite=False)
            w += scipy.linalg.lu_solve(lu, zA - M @ w, check_finite=False)
            ok = np.all(np.isfinite(w)) and np.abs(w).max() < 1e12
        except (np.linalg.LinAlgError, ValueError):
            ok = False
        if ok:
            v = np.concatenate(([1.0], w))
        else:
            K = np.hstack((zA[:, None], -M))
            v = np.linalg.svd(K)[2][-1]
        v = v / np.abs(v).max()
        return float(v[0]), v[1:]

    def _solve_junction(self, eta, A, j, kind, target, tau, bA, dtau, dbA, t):
        """
        Intersect the facet line with the event hyperplane exactly.

        Falls back to the linear step when the square system is singular.
        """
        fallback = (tau + t * dtau, bA + t * dbA)
        if A.size == 0:
            # only activation from the origin segment: tau z_j = target
            return target / self.z[j], bA
        M, rhs = self._facet_system(eta, A)
        a = A.size
        S = np.zeros((a + 1, a + 1))
        r = np.zeros(a + 1)
        S[:a, 0] = -self.z[A]
        S[:a, 1:] = M
        r[:a] = -rhs
        if kind == "activate":
            S[a, 0] = self.z[j]
            S[a, 1:] = -self.G[j, A]
        else:
            pos = int(np.searchsorted(A, j))
            S[a, 1 + pos] = 1.0
        r[a] = target
        try:
            lu = scipy.linalg.lu_factor(S, check_finite=False)
            x = scipy.linalg.lu_solve(lu, r, check_finite=False)
            x += scipy.linalg.lu_solve(lu, r - S @ x, check_finite=False)
        except (np.linalg.LinAlgError, ValueError):
            return fallback
        if not np.all(np.isfinite(x)):
            return fallback
        # guard against an ill-conditioned square system drifting off the line
        if abs(x[0] - fallback[0]) > 1e-6 * max(1.0, abs(fallback[0])):
            return fallback
        return float(x[0]), x[1:]

    # -- main loop -----------------------------------------------------
    def run(self) -> Tuple[List[PathBreakpoint], str, float]:
        p = self.p
        eta = np.zeros(p, dtype=int)
        b = np.zeros(p)
        tau = 0.0
        bps = [PathBreakpoint(0, 0.0, b.copy(), tuple(int(e) for e in eta), Event("origin"))]
        visited = set()
        entering = None  # (j, crossing sign along the coordinate's curve)

        if np.abs(self.z).max() <= self.fit_tol:
            visited.add(tuple(eta))
            bps.append(PathBreakpoint(1, 1.0, b.copy(), tuple(eta), Event("terminate_fit")))
            return bps, "fit", float(np.abs(self.z).max())

        while True:
            A = np.flatnonzero(eta)
            dtau, dbA = self._direction(eta, A)
            db = np.zeros(p)
            db[A] = dbA
            dc = dtau * self.z - self.G[:, A] @ dbA
            if entering is not None:
                j0, sign0 = entering
                du = db[j0] if eta[j0] != 0 else dc[j0]
                if abs(du) < 1e-12:
                    raise PathError(f"no transversal direction entering facet at coordinate {j0}")
                if np.sign(du) != sign0:
                    dtau, dbA, db, dc = -dtau, -dbA, -db, -dc
            elif dtau < 0:
                dtau, dbA, db, dc = -dtau, -dbA, -db, -dc

            key = tuple(int(e) for e in eta)
            if key in visited:
                raise PathError("path revisited a facet")
            visited.add(key)

            c = tau * self.z - self.G[:, A] @ b[A]
            cand = self._events(eta, A, b, c, db, dc, dtau)
            if dtau < 0:
                tmax = -tau / dtau
            else:
                tmax = math.inf

            if cand is None:
                if dtau <= 0:
                    raise PathError("path direction is unbounded without increasing tau")
                resid = float(np.abs(self.z - self.G[:, A] @ (dbA / dtau)).max()) if A.size else float(np.abs(self.z).max())
                t_end = max(tau, 1.0) / dtau
                bps.append(
                    PathBreakpoint(len(bps), tau + t_end * dtau, b + t_end * db, key, Event("terminate_fit"))
                )
                return bps, "fit", resid

            ts, kinds, js, pieces, targets, rates, knots = cand
            t_min = float(ts.min())
            if t_min > tmax + 1e-12:
                raise PathError("path returned to tau = 0")
            tie = np.flatnonzero(rates * (ts - t_min) <= EVENT_TOL)
            first = tie[np.lexsort((js[tie], kinds[tie]))[0]]
            t = float(ts[first])
            kind = _KIND[int(kinds[first])]
            j = int(js[first])
            new_eta = int(pieces[first])
            target = float(targets[first])
            knot = None if knots[first] < 0 else int(knots[first])

            new_tau, new_bA = self._solve_junction(eta, A, j, kind, target, tau, b[A], dtau, dbA, t)
            b_new = np.zeros(p)
            b_new[A] = new_bA
            if kind == "activate":
                b_new[j] = 0.0
                sign0 = int(np.sign(target))
            elif kind == "deactivate":
                b_new[j] = 0.0
                sign0 = -int(np.sign(eta[j]))
            else:
                b_new[j] = target
                sign0 = int(np.sign(db[j]))
            tau, b = new_tau, b_new
            ev = Event(kind, int(j), knot)
            bps.append(PathBreakpoint(len(bps), tau, b.copy(), key, ev))
            eta = eta.copy()
            eta[j] = new_eta
            entering = (j, sign0)
            if tau > self.tau_max:
                return bps, "tau_max", math.nan
            if len(bps) - 1 >= self.max_steps:
                last = bps[-1]
                bps[-1] = PathBreakpoint(last.step, last.tau, last.b, last.facet, Event("terminate_cap", last.event.j, last.event.knot))
                return bps, "cap", math.nan

    def _events(self, eta, A, b, c, db, dc, dc_tau):
        """
        Boundary hits along the current direction as parallel arrays
        ``(t, kind, j, new_piece, target, |rate|, knot)``.

        ``kind`` holds the tie-break priority code, ``target`` the boundary
        value of ``b_j`` (of ``c_j`` for an activation) and ``knot`` is -1
        when no knot is involved.
        """
        eps = 1e-14
        parts = []
        # rates below round-off of the terms that produced them are noise
        noise = 1e-11 * (np.abs(self.z) * abs(dc_tau) + np.abs(self.G[:, A]) @ np.abs(db[A])) + eps
        I = np.flatnonzero((eta == 0) & (np.abs(dc) > noise))
        if I.size:
            piece = np.where(dc[I] > 0, 1, -1)
            t = (piece - c[I]) / dc[I]
            parts.append((t, np.full(I.size, _PRIORITY["activate"]), I, piece,
                          piece.astype(float), np.abs(dc[I]), np.full(I.size, -1)))
        if A.size:
            m = self.pen.m
            s = np.sign(eta[A])
            k = np.abs(eta[A]) - 1
            rate = s * db[A]
            mag = s * b[A]
            grow = (rate > eps) & (k + 1 < m)
            if grow.any():
                kg = k[grow]
                up = self.knots[kg + 1]
                parts.append(((up - mag[grow]) / rate[grow], np.full(kg.size, _PRIORITY["knot_cross"]),
                              A[grow], s[grow] * (kg + 2), s[grow] * up, rate[grow], kg + 1))
            shrink = rate < -eps
            if shrink.any():
                ks = k[shrink]
                low = self.knots[ks]
                kind = np.where(ks == 0, _PRIORITY["deactivate"], _PRIORITY["knot_cross"])
                parts.append(((mag[shrink] - low) / -rate[shrink], kind, A[shrink], s[shrink] * ks,
                              s[shrink] * low, -rate[shrink], np.where(ks == 0, -1, ks)))
        if not parts:
            return None
        t, kind, jj, piece, target, rate, knot = (np.concatenate(x) for x in zip(*parts))
        return np.maximum(t, 0.0), kind, jj, piece, target, rate, knot


def _jitter(p: int) -> np.ndarray:
    return JITTER * np.random.default_rng(_JITTER_SEED).uniform(-1.0, 1.0, size=p)


def trace_path(
    gram,
    z_star,
    pen: QuadSplinePenalty,
    max_steps: int = DEFAULT_MAX_STEPS,
    fit_tol: float = 1e-8,
    tau_max: float = math.inf,
) -> SolutionPath:
    """
    Track the main branch from sufficient statistics ``X'X/n`` and ``X'y/n``.

    Parameters
    ----------
    max_steps : int
        Segment budget; reaching it ends the path with ``termination == "cap"``.
    fit_tol : float
        Sup-norm tolerance on ``z_star - gram @ beta`` for the final ray.
    tau_max : float
        Stop at the first breakpoint beyond this ``tau`` (``termination ==
        "tau_max"``).  Levels ``lam >= 1/tau_max`` are then fully covered
        except for later crossings of a folding path, which are never the
        sparsest in practice but are not searched.

    A degenerate junction triggers one retry with ``z_star`` perturbed by a
    fixed pseudo-random vector of magnitude ``JITTER``; a second failure
    raises :class:`PathError`.
    """
    gram = np.asarray(gram, dtype=float)
    z_star = np.asarray(z_star, dtype=float)
    if gram.shape != (z_star.size, z_star.size):
        raise ValueError("gram and z_star dimensions disagree")
    try:
        bps, term, resid = _Tracker(gram, z_star, pen, max_steps, fit_tol, tau_max).run()
        return SolutionPath(bps, term, gram, z_star, pen, resid)
    except PathError:
        z_j = z_star + _jitter(z_star.size)
        try:
            bps, term, resid = _Tracker(gram, z_j, pen, max_steps, fit_tol, tau_max).run()
        except PathError as exc:
            raise PathError(f"degenerate design: {exc}") from exc
        return SolutionPath(bps, term, gram, z_j, pen, resid, jittered=True)


def compute_path(
    design: StandardizedDesign,
    y,
    pen: QuadSplinePenalty,
    max_steps: int = DEFAULT_MAX_STEPS,
    fit_tol: float = 1e-8,
    tau_max: float = math.inf,
) -> SolutionPath:
    """Main branch of the KKT solution set for ``(design, y)`` under ``pen``."""
    return trace_path(design.gram, design.z_star(y), pen, max_steps, fit_tol, tau_max)


def _crossings(path: SolutionPath, tau: float):
    bps = path.breakpoints
    last = len(bps) - 2
    for i in range(len(bps) - 1):
        t0, t1 = bps[i].tau, bps[i + 1].tau
        b0, b1 = bps[i].b, bps[i + 1].b
        ray = path.termination == "fit" and i == last
        if t0 == t1:
            if t0 == tau:
                yield b0
                yield b1
            continue
        s = (tau - t0) / (t1 - t0)
        if s < 0 or (s > 1 and not ray):
            continue
        if s <= 1:
            yield (1.0 - s) * b0 + s * b1
        else:
            yield b0 + s * (b1 - b0)


def solve_at_lambda(path: SolutionPath, lam: float, tol: float = KKT_TOL) -> FitResult:
    """
    Sparsest path point at penalty level ``lam``; ties go to smaller l1 norm.
    """
    if not lam > 0:
        raise ValueError("lam must be positive")
    tau = 1.0 / lam
    found: List[np.ndarray] = []
    for b in _crossings(path, tau):
        beta = b / tau
        if not any(np.array_equal(beta, f) or np.allclose(beta, f, rtol=0, atol=1e-12) for f in found):
            found.append(beta)
    if not found:
        raise PenaltyRangeError(
            f"penalty level {lam:g} below path range (largest tau reached {path.max_tau:g})"
        )
    best = min(found, key=lambda beta: (np.count_nonzero(beta), float(np.abs(beta).sum())))
    rep = kkt_report_gram(path.gram, path.z_star, best, path.penalty, lam, tol * lam)
    return FitResult(lam, best, rep, n_crossings=len(found))


def path_to_coefficients(path: SolutionPath, lambda_grid: Iterable[float]) -> list:
    """
    :func:`solve_at_lambda` over a grid.  Entries that fail hold the
    exception instance instead of a :class:`FitResult`.
    """
    grid = list(lambda_grid)
    if not grid:
        raise ValueError("lambda grid is empty")
    out = []
    for lam in grid:
        try:
            out.append(solve_at_lambda(path, lam))
        except (PenaltyRangeError, ValueError) as exc:
            out.append(exc)
    return out


PATH_CSV_HEADER = ["step", "tau", "event", "j", "b_j"]


def write_path_csv(path: SolutionPath, fh) -> None:
    """
    Long-format export: one event row (``j = 0``) per breakpoint followed by
    one row per nonzero coefficient, coordinates numbered from 1.
    """
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(PATH_CSV_HEADER)
    for bp in path.breakpoints:
        w.writerow([bp.step, repr(float(bp.tau)), bp.event.label(one_based=True), 0, ""])
        for j in np.flatnonzero(bp.b):
            w.writerow([bp.step, repr(float(bp.tau)), "", int(j) + 1, repr(float(bp.b[j]))])


def read_path_csv(fh, p: int) -> List[Tuple[int, float, str, np.ndarray]]:
    """Inverse of :func:`write_path_csv`: ``(step, tau, event, b)`` tuples."""
    rows = csv.DictReader(fh)
    if rows.fieldnames != PATH_CSV_HEADER:
        raise ValueError(f"unexpected path CSV header {rows.fieldnames}")
    out: List[Tuple[int, float, str, np.ndarray]] = []
    for row in rows:
        j = int(row["j"])
        if j == 0:
            out.append((int(row["step"]), float(row["tau"]), row["event"], np.zeros(p)))
        else:
            out[-1][3][j - 1] = float(row["b_j"])
    return out
