"""
Monte Carlo experiments for the Gaussian linear model and k-fold CV.

Data follow ``y = X beta + eps`` with rows of the raw design drawn from
``N(0, Sigma)``, ``Sigma_jk = r**|j-k|``, columns standardized afterwards.
Every replication draws from its own Philox stream keyed on
``(seed, rep_index)``, so results do not depend on execution order.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .design import StandardizedDesign, standardize
from .path import PathError, compute_path, path_to_coefficients, solve_at_lambda, trace_path
from .penalty import QuadSplinePenalty, make_penalty
from .selection import ModelTruth, model_error, selection_metrics

__all__ = [
    "SimConfig",
    "MetricsRecord",
    "ReplicationResult",
    "CVResult",
    "default_lambda_grid",
    "generate_data",
    "replicate",
    "run_experiment",
    "cross_validate",
    "load_sim_config",
    "write_metrics_csv",
    "read_metrics_csv",
    "METRICS_CSV_HEADER",
]

METHODS = ("lasso", "mcp", "scad")


def default_lambda_grid(points: int = 30, lo: float = 0.25, hi: float = 3.0) -> Tuple[float, ...]:
    """Evenly spaced ``lam / sqrt(log(p)/n)`` ratios."""
    return tuple(float(x) for x in np.linspace(lo, hi, points))


@dataclass(frozen=True)
class SimConfig:
    n: int
    p: int
    d_o: int
    beta_star: float
    gamma: float
    sigma: float = 1.0
    design_correlation: float = 0.5
    support_layout: str = "first_d_o"
    replications: int = 1000
    seed: int = 0
    lambda_grid: Tuple[float, ...] = field(default_factory=default_lambda_grid)
    methods: Tuple[str, ...] = ("mcp", "scad")
    max_steps: int = 10_000

    def __post_init__(self):
        object.__setattr__(self, "lambda_grid", tuple(float(x) for x in self.lambda_grid))
        object.__setattr__(self, "methods", tuple(m.lower() for m in self.methods))
        if not 0 <= self.d_o <= self.p:
            raise ValueError("need 0 <= d_o <= p")
        if self.n < 1 or self.p < 2:
            raise ValueError("need n >= 1 and p >= 2")
        if not self.lambda_grid or min(self.lambda_grid) <= 0:
            raise ValueError("lambda_grid must be nonempty and positive")
        if not 0 <= self.design_correlation < 1:
            raise ValueError("design_correlation must lie in [0, 1)")
        if self.support_layout not in ("first_d_o", "evenly_spaced"):
            raise ValueError(f"unknown support layout {self.support_layout!r}")
        bad = set(self.methods) - set(METHODS)
        if bad or not self.methods:
            raise ValueError(f"methods must be a nonempty subset of {METHODS}")
        if self.replications < 1 or self.sigma <= 0 or self.beta_star <= 0:
            raise ValueError("replications, sigma and beta_star must be positive")

    @property
    def lambda_unit(self) -> float:
        """``sqrt(log(p)/n)``, the unit of ``lambda_grid``."""
        return math.sqrt(math.log(self.p) / self.n)

    @property
    def lambdas(self) -> np.ndarray:
        return np.asarray(self.lambda_grid) * self.lambda_unit

    def covariance(self) -> np.ndarray:
        idx = np.arange(self.p)
        return self.design_correlation ** np.abs(np.subtract.outer(idx, idx))

    def support(self) -> np.ndarray:
        if self.support_layout == "first_d_o":
            return np.arange(self.d_o)
        return np.unique(np.linspace(0, self.p - 1, self.d_o).round().astype(int))

    def penalty(self, method: str) -> QuadSplinePenalty:
        return make_penalty(method, self.gamma)


def _rng(seed: int, rep_index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, rep_index])))


def generate_data(cfg: SimConfig, rep_index: int) -> Tuple[StandardizedDesign, np.ndarray, ModelTruth]:
    rng = _rng(cfg.seed, rep_index)
    L = np.linalg.cholesky(cfg.covariance())
    raw = rng.standard_normal((cfg.n, cfg.p)) @ L.T
    design = standardize(raw)
    beta = np.zeros(cfg.p)
    beta[cfg.support()] = cfg.beta_star
    y = design.X @ beta + cfg.sigma * rng.standard_normal(cfg.n)
    return design, y, ModelTruth(beta, cfg.sigma)


@dataclass
class ReplicationResult:
    """
    Per-replication metrics, arrays indexed ``[method, lambda]``.

    ``betas`` holds the fitted coefficients, NaN rows where a fit failed.
    """

    rep_index: int
    me: np.ndarray
    me_gram: np.ndarray
    tm: np.ndarray
    cs: np.ndarray
    sign: np.ndarray
    false_inclusion: np.ndarray
    steps: np.ndarray
    betas: np.ndarray
    failed: np.ndarray


def replicate(cfg: SimConfig, rep_index: int) -> ReplicationResult:
    design, y, truth = generate_data(cfg, rep_index)
    Sigma = cfg.covariance()
    lams = cfg.lambdas
    M, L = len(cfg.methods), lams.size
    shape = (M, L)
    res = ReplicationResult(
        rep_index,
        me=np.full(shape, np.nan),
        me_gram=np.full(shape, np.nan),
        tm=np.full(shape, np.nan),
        cs=np.full(shape, np.nan),
        sign=np.full(shape, np.nan),
        false_inclusion=np.full(shape, np.nan),
        steps=np.full(M, np.nan),
        betas=np.full((M, L, cfg.p), np.nan),
        failed=np.zeros(shape, dtype=bool),
    )
    # slightly past the smallest level so every grid point is crossed
    tau_max = 1.0 / lams.min() * (1 + 1e-9)
    for mi, method in enumerate(cfg.methods):
        try:
            path = compute_path(design, y, cfg.penalty(method), max_steps=cfg.max_steps, tau_max=tau_max)
        except PathError:
            res.failed[mi, :] = True
            continue
        res.steps[mi] = path.steps_used
        for li, fit in enumerate(path_to_coefficients(path, lams)):
            if isinstance(fit, Exception):
                res.failed[mi, li] = True
                continue
            sm = selection_metrics(fit, truth)
            res.betas[mi, li] = fit.beta_hat
            res.me[mi, li] = model_error(fit.beta_hat, truth, Sigma)
            res.me_gram[mi, li] = model_error(fit.beta_hat, truth, design.gram)
            res.tm[mi, li] = sm.tm
            res.cs[mi, li] = sm.cs
            res.sign[mi, li] = sm.sign_consistent
            res.false_inclusion[mi, li] = sm.false_inclusion
    return res


@dataclass(frozen=True)
class MetricsRecord:
    method: str
    lambda_ratio: float
    mean_me: float
    mc_stderr_me: float
    mean_tm: float
    cs_rate: float
    sign_rate: float
    false_inclusion_rate: float
    steps_mean: float
    mean_me_gram: float = math.nan
    replications: int = 0
    n_failed: int = 0


METRICS_CSV_HEADER = [
    "method",
    "lambda_ratio",
    "mean_me",
    "mc_stderr_me",
    "mean_tm",
    "cs_rate",
    "sign_rate",
    "false_inclusion_rate",
    "steps_mean",
]


def _replicate_star(args):
    return replicate(*args)


def run_experiment(
    cfg: SimConfig,
    workers: int = 1,
    keep: Optional[list] = None,
) -> List[MetricsRecord]:
    """
    Replicate, fit every method along the grid and aggregate in replication
    order.  Failed fits are excluded from the means and counted in
    ``n_failed``.

    If ``keep`` is a list, the per-replication results are appended to it.
    """
    jobs = [(cfg, r) for r in range(cfg.replications)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            reps = list(ex.map(_replicate_star, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        reps = [replicate(*job) for job in jobs]
    reps.sort(key=lambda r: r.rep_index)
    if keep is not None:
        keep.extend(reps)

    def stack(name):
        return np.stack([getattr(r, name) for r in reps])

    me, me_gram, tm = stack("me"), stack("me_gram"), stack("tm")
    cs, sign, fi = stack("cs"), stack("sign"), stack("false_inclusion")
    steps, failed = stack("steps"), stack("failed")

    records = []
    for mi, method in enumerate(cfg.methods):
        steps_mean = float(np.nanmean(steps[:, mi])) if np.isfinite(steps[:, mi]).any() else math.nan
        for li, ratio in enumerate(cfg.lambda_grid):
            ok = ~failed[:, mi, li]
            k = int(ok.sum())
            col = me[ok, mi, li]
            se = float(col.std(ddof=1) / math.sqrt(k)) if k > 1 else math.nan
            mean = (lambda a: float(a[ok, mi, li].mean()) if k else math.nan)
            records.append(
                MetricsRecord(
                    method=method,
                    lambda_ratio=float(ratio),
                    mean_me=mean(me),
                    mc_stderr_me=se,
                    mean_tm=mean(tm),
                    cs_rate=mean(cs),
                    sign_rate=mean(sign),
                    false_inclusion_rate=mean(fi),
                    steps_mean=steps_mean,
                    mean_me_gram=mean(me_gram),
                    replications=k,
                    n_failed=int((~ok).sum()),
                )
            )
    return records


def write_metrics_csv(records: Iterable[MetricsRecord], fh, extended: bool = False) -> None:
    """
    Metrics table; ``extended`` appends the empirical-Gram model error and
    the replication counts after the standard columns.
    """
    header = list(METRICS_CSV_HEADER)
    if extended:
        header += ["mean_me_gram", "replications", "n_failed"]
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(header)
    for rec in records:
        w.writerow([rec.method] + [_fmt(getattr(rec, h)) for h in header[1:]])


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return repr(float(x))


def read_metrics_csv(fh) -> List[Dict[str, object]]:
    rows = csv.DictReader(fh)
    missing = [h for h in METRICS_CSV_HEADER if h not in (rows.fieldnames or [])]
    if missing:
        raise ValueError(f"metrics CSV lacks columns {missing}")
    out = []
    for row in rows:
        rec: Dict[str, object] = {"method": row["method"]}
        for k, v in row.items():
            if k != "method":
                rec[k] = float(v)
        out.append(rec)
    return out


_CONFIG_TYPES = {f.name: f.type for f in fields(SimConfig)}


def _parse_value(key: str, raw: str):
    raw = raw.strip()
    if key in ("lambda_grid",):
        return tuple(float(x) for x in raw.split(",") if x.strip())
    if key == "methods":
        return tuple(x.strip() for x in raw.split(",") if x.strip())
    if key in ("n", "p", "d_o", "replications", "seed", "max_steps"):
        return int(raw)
    if key == "support_layout":
        return raw
    return float(raw)


def load_sim_config(text: str, **overrides) -> SimConfig:
    """
    Parse flat ``key = value`` lines (``#`` comments allowed).  Lists are
    comma separated.  Unknown keys raise ``ValueError``.
    """
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key = value")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in _CONFIG_TYPES:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
        values[key] = _parse_value(key, raw)
    values.update({k: v for k, v in overrides.items() if v is not None})
    return SimConfig(**values)


@dataclass(frozen=True)
class CVResult:
    lam: float
    lambda_grid: np.ndarray
    cv_mse: np.ndarray
    cv_se: np.ndarray
    folds: Tuple[np.ndarray, ...]


def kfold_indices(n: int, k: int, seed: int = 0) -> Tuple[np.ndarray, ...]:
    """Random partition of ``range(n)`` into ``k`` folds whose sizes differ by at most one."""
    if not 2 <= k <= n:
        raise ValueError(f"need 2 <= k <= n, got k={k}, n={n}")
    perm = np.random.default_rng(seed).permutation(n)
    return tuple(np.sort(f) for f in np.array_split(perm, k))


def cross_validate(
    design: StandardizedDesign,
    y,
    pen_family: str,
    gamma: Optional[float],
    k: int,
    lambda_grid: Sequence[float],
    seed: int = 0,
    max_steps: int = 10_000,
) -> CVResult:
    """
    k-fold cross-validation of the penalty level.

    Each training fit minimizes ``||y - X b||**2 / (2 n_train) + sum rho``,
    the same normalization as the full-data objective, so a level means the
    same thing on every fold.  Rescaling the loss by ``n`` instead (the
    ``||y - Xb||**2 / 2 + lam ||b||_1`` form) shifts the best level by a
    factor tied to the fold size; with 5 folds that is roughly a 20% change,
    which matters when CV is used to pick ``lam`` rather than to predict.

    Returns the grid level with the smallest mean validation MSE (averaged
    over folds) together with the whole curve.
    """
    y = np.asarray(y, dtype=float)
    grid = np.asarray(lambda_grid, dtype=float)
    if grid.size == 0 or grid.min() <= 0:
        raise ValueError("lambda grid must be nonempty and positive")
    pen = make_penalty(pen_family, gamma)
    folds = kfold_indices(design.n, k, seed)
    X = design.X
    errs = np.empty((k, grid.size))
    tau_max = 1.0 / grid.min() * (1 + 1e-9)
    for f, test in enumerate(folds):
        train = np.setdiff1d(np.arange(design.n), test)
        if train.size == 0:
            raise ValueError(f"fold {f} leaves no training rows")
        Xt, yt = X[train], y[train]
        path = trace_path(Xt.T @ Xt / train.size, Xt.T @ yt / train.size, pen, max_steps=max_steps, tau_max=tau_max)
        for li, lam in enumerate(grid):
            beta = solve_at_lambda(path, lam).beta_hat
            r = y[test] - X[test] @ beta
            errs[f, li] = float(r @ r) / test.size
    mean = errs.mean(axis=0)
    se = errs.std(axis=0, ddof=1) / math.sqrt(k)
    best = int(np.argmin(mean))
    return CVResult(float(grid[best]), grid, mean, se, folds)
