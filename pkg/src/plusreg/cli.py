"""
Command-line interface: ``plusreg {fit,path,simulate,diagnose,plot}``.

Exit codes: 0 success, 1 usage or missing input, 2 data or numerical error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import os
import sys
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .design import DesignError, global_convexity_check, sparse_convexity_check, sparse_riesz_scan, standardize
from .path import PathError, PenaltyRangeError, compute_path, solve_at_lambda, write_path_csv
from .penalty import make_penalty
from .plotting import metrics_svg, render_figures
from .selection import estimate_sigma, universal_lambda
from .simlab import SimConfig, load_sim_config, read_metrics_csv, run_experiment, write_metrics_csv

log = logging.getLogger("plusreg")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def read_table(path: str, response: Optional[str]) -> Tuple[List[str], np.ndarray, Optional[np.ndarray]]:
    """Read a headed numeric CSV; returns covariate names, raw design and response."""
    if not os.path.isfile(path):
        raise UsageError(f"no such file: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path} is empty")
    header = [h.strip() for h in rows[0]]
    if response is not None and response not in header:
        raise UsageError(f"response column {response!r} not in header")
    try:
        data = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float)
    except ValueError as exc:
        raise DataError(f"non-numeric value in {path}: {exc}") from exc
    if data.ndim != 2 or data.shape[0] == 0 or data.shape[1] != len(header):
        raise DataError(f"{path}: ragged or empty table")
    if not np.all(np.isfinite(data)):
        raise DataError(f"{path}: non-finite values")
    if response is None:
        return header, data, None
    r = header.index(response)
    names = [h for i, h in enumerate(header) if i != r]
    return names, np.delete(data, r, axis=1), data[:, r]


def _penalty(args):
    try:
        return make_penalty(args.penalty, args.gamma)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _path_for(design, y, pen, lam_min, max_steps):
    # full path when the design has full column rank; otherwise stop just past lam_min
    tau_max = math.inf if design.p <= design.n else 1.0 / lam_min * (1 + 1e-9)
    return compute_path(design, y, pen, max_steps=max_steps, tau_max=tau_max)


def cmd_fit(args) -> int:
    names, raw, y = read_table(args.data, args.response)
    design = standardize(raw)
    pen = _penalty(args)
    n, p = design.n, design.p
    if args.lambda_ is not None:
        lam = args.lambda_
        path = _path_for(design, y, pen, lam, args.max_steps)
        fit = solve_at_lambda(path, lam)
        sigma_hat = estimate_sigma(design, y, fit) if fit.beta_hat.astype(bool).sum() < n else math.nan
    else:
        # preliminary fit at the guessed sigma, then one refinement pass
        lam0 = universal_lambda(args.sigma_guess, p, n)
        fit0 = solve_at_lambda(_path_for(design, y, pen, lam0, args.max_steps), lam0)
        sigma0 = estimate_sigma(design, y, fit0)
        if not sigma0 > 0:
            raise DataError("estimated noise level is zero; use --lambda")
        lam = universal_lambda(sigma0, p, n)
        path = _path_for(design, y, pen, lam, args.max_steps)
        fit = solve_at_lambda(path, lam)
        sigma_hat = estimate_sigma(design, y, fit)
    fit.sigma_hat = sigma_hat
    beta_raw = design.to_raw_scale(fit.beta_hat)
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["variable", "coefficient", "standardized", "active"])
        for name, b_raw, b_std in zip(names, beta_raw, fit.beta_hat):
            w.writerow([name, repr(float(b_raw)), repr(float(b_std)), int(b_std != 0)])
    print(f"penalty = {pen.name}")
    print(f"lambda = {lam!r}")
    print(f"sigma_hat = {sigma_hat!r}")
    print(f"active = {','.join(names[j] for j in fit.support)}")
    print(f"kkt_max_active_residual = {fit.kkt.max_active_residual!r}")
    print(f"kkt_max_inactive_excess = {fit.kkt.max_inactive_excess!r}")
    print(f"kkt_satisfied = {fit.kkt.satisfied}")
    print(f"crossings = {fit.n_crossings}")
    return EXIT_OK


def cmd_path(args) -> int:
    _, raw, y = read_table(args.data, args.response)
    design = standardize(raw)
    pen = _penalty(args)
    tau_max = 1.0 / args.lambda_min if args.lambda_min else math.inf
    path = compute_path(design, y, pen, max_steps=args.max_steps, tau_max=tau_max)
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        write_path_csv(path, fh)
    print(f"steps = {path.steps_used}")
    print(f"termination = {path.termination}")
    if path.jittered:
        print("jittered = True")
    return EXIT_OK


def _sim_config(args) -> SimConfig:
    overrides = {
        "n": args.n,
        "p": args.p,
        "d_o": args.d_o,
        "beta_star": args.beta_star,
        "gamma": args.gamma,
        "sigma": args.sigma,
        "design_correlation": args.rho,
        "support_layout": args.support_layout,
        "replications": args.replications,
        "seed": args.seed,
        "max_steps": args.max_steps,
    }
    if args.grid:
        overrides["lambda_grid"] = tuple(float(x) for x in args.grid.split(","))
    if args.methods:
        overrides["methods"] = tuple(m.strip() for m in args.methods.split(","))
    env_seed = os.environ.get("PLUS_SEED")
    if env_seed is not None:
        overrides["seed"] = int(env_seed)
    text = ""
    if args.config:
        if not os.path.isfile(args.config):
            raise UsageError(f"no such file: {args.config}")
        with open(args.config, encoding="utf-8") as fh:
            text = fh.read()
    try:
        return load_sim_config(text, **overrides)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid simulation config: {exc}") from exc


def cmd_simulate(args) -> int:
    cfg = _sim_config(args)
    records = run_experiment(cfg, workers=args.workers)
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        write_metrics_csv(records, fh, extended=args.extended)
    failed = sum(r.n_failed for r in records)
    if failed:
        print(f"failed fits = {failed}", file=sys.stderr)
    if args.figures:
        stem = os.path.splitext(os.path.basename(args.out))[0]
        for path in render_figures(records, args.figures, stem=stem):
            print(f"figure = {path}")
    print(f"records = {len(records)}")
    return EXIT_OK


def cmd_diagnose(args) -> int:
    _, raw, _ = read_table(args.data, args.response)
    design = standardize(raw)
    pen = _penalty(args)
    lines = [
        f"n = {design.n}",
        f"p = {design.p}",
        f"penalty = {pen.name}",
        f"max_concavity = {pen.max_concavity()!r}",
    ]
    g = global_convexity_check(design, pen)
    lines.append(f"global_convexity = {g.holds}")
    lines.append(f"global_convexity_margin = {g.margin!r}")
    if args.dstar is not None:
        kw = {"mode": args.mode, "n_samples": args.samples, "seed": args.seed}
        try:
            bounds = sparse_riesz_scan(design, args.dstar, **kw)
            s = sparse_convexity_check(design, pen, args.dstar, **kw)
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
        lines += [
            f"d_star = {args.dstar}",
            f"mode = {args.mode}",
            f"certified = {bounds.certified}",
            f"subsets_scanned = {bounds.n_subsets}",
            f"sparse_riesz_c_lower = {bounds.c_lower!r}",
            f"sparse_riesz_c_upper = {bounds.c_upper!r}",
            f"sparse_convexity = {s.holds}",
            f"sparse_convexity_margin = {s.margin!r}",
        ]
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_plot(args) -> int:
    if not os.path.isfile(args.metrics):
        raise UsageError(f"no such file: {args.metrics}")
    with open(args.metrics, newline="", encoding="utf-8") as fh:
        try:
            rows = read_metrics_csv(fh)
        except (KeyError, ValueError) as exc:
            raise DataError(str(exc)) from exc
    if rows and args.metric not in rows[0]:
        raise UsageError(f"unknown metric column {args.metric!r}")
    svg = metrics_svg(rows, metric=args.metric, title=args.title)
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(svg)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="plusreg", description=__doc__.strip().splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    def data_args(sp, response_required=True):
        sp.add_argument("--data", required=True, help="headed numeric CSV")
        sp.add_argument("--response", required=response_required, help="response column name")

    def penalty_args(sp):
        sp.add_argument("--penalty", choices=["l1", "mcp", "scad"], default="mcp")
        sp.add_argument("--gamma", type=float, default=None)

    sp = sub.add_parser("fit", help="coefficients at one penalty level")
    data_args(sp)
    penalty_args(sp)
    lam = sp.add_mutually_exclusive_group(required=True)
    lam.add_argument("--lambda", dest="lambda_", type=float)
    lam.add_argument("--lambda-universal", action="store_true")
    sp.add_argument("--sigma-guess", type=float, default=1.0)
    sp.add_argument("--max-steps", type=int, default=10_000)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("path", help="export the solution path")
    data_args(sp)
    penalty_args(sp)
    sp.add_argument("--lambda-min", type=float, default=None, help="stop once 1/tau falls below this")
    sp.add_argument("--max-steps", type=int, default=10_000)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_path)

    sp = sub.add_parser("simulate", help="replicated experiment, metrics CSV")
    sp.add_argument("--config", help="key = value file")
    sp.add_argument("--n", type=int)
    sp.add_argument("--p", type=int)
    sp.add_argument("--d-o", dest="d_o", type=int)
    sp.add_argument("--beta-star", type=float)
    sp.add_argument("--gamma", type=float)
    sp.add_argument("--sigma", type=float)
    sp.add_argument("--rho", type=float, help="AR(1) design correlation")
    sp.add_argument("--support-layout", choices=["first_d_o", "evenly_spaced"])
    sp.add_argument("--replications", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--grid", help="comma-separated lambda/sqrt(log(p)/n) ratios")
    sp.add_argument("--methods", help="comma-separated subset of lasso,mcp,scad")
    sp.add_argument("--max-steps", type=int)
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--extended", action="store_true", help="append Gram-based ME and counts")
    sp.add_argument("--figures", help="directory for matplotlib ME/TM figures")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("diagnose", help="convexity and sparse Riesz diagnostics")
    data_args(sp, response_required=False)
    penalty_args(sp)
    sp.add_argument("--dstar", type=int)
    sp.add_argument("--mode", choices=["exhaustive", "sampled"], default="exhaustive")
    sp.add_argument("--samples", type=int, default=1000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_diagnose)

    sp = sub.add_parser("plot", help="SVG chart of a metrics CSV")
    sp.add_argument("--metrics", required=True)
    sp.add_argument("--metric", default="mean_me")
    sp.add_argument("--title", default="")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_plot)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"plusreg: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, DesignError, PathError, PenaltyRangeError, np.linalg.LinAlgError, ValueError) as exc:
        print(f"plusreg: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
