"""Penalized linear unbiased selection: spline penalties, path tracking and diagnostics."""

from .design import StandardizedDesign, standardize
from .kkt import KktReport, kkt_report, local_min_certificate, rescaled_kkt_report
from .path import SolutionPath, compute_path, path_to_coefficients, solve_at_lambda
from .penalty import QuadSplinePenalty, make_l1, make_mcp, make_penalty, make_scad
from .selection import FitResult, ModelTruth, universal_lambda

__all__ = [
    "StandardizedDesign",
    "standardize",
    "KktReport",
    "kkt_report",
    "rescaled_kkt_report",
    "local_min_certificate",
    "SolutionPath",
    "compute_path",
    "solve_at_lambda",
    "path_to_coefficients",
    "QuadSplinePenalty",
    "make_l1",
    "make_mcp",
    "make_scad",
    "make_penalty",
    "FitResult",
    "ModelTruth",
    "universal_lambda",
]
