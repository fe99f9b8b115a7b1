import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from plusreg.design import standardize
from plusreg.kkt import KktReport
from plusreg.path import compute_path, solve_at_lambda
from plusreg.penalty import make_mcp, make_scad
from plusreg.selection import (
    FitResult,
    ModelTruth,
    estimate_sigma,
    false_selection_bound,
    model_error,
    normal_cdf,
    oracle_lse,
    selection_metrics,
    unbiasedness_lambda_ceiling,
    universal_lambda,
)

from oracles import orthonormal_design

_OK = KktReport(0.0, -1.0, True, 1e-8)


def fit_of(beta, lam=1.0):
    return FitResult(lam, np.asarray(beta, dtype=float), _OK)


def test_universal_lambda_values():
    assert universal_lambda(1, 12, 50) == pytest.approx(0.3152717335752129, abs=1e-12)
    assert universal_lambda(2, 12, 50) == pytest.approx(2 * 0.3152717335752129, abs=1e-12)
    assert universal_lambda(1, 300, 100) == pytest.approx(0.33775086897463935, abs=1e-12)
    with pytest.raises(ValueError):
        universal_lambda(1, 1, 50)


def test_normal_cdf_values():
    assert normal_cdf(0.0) == 0.5
    mpmath.mp.dps = 30
    for x in (-2.22935, -6.0, -1.0, 0.3, 2.5):
        ref = mpmath.quad(lambda t: mpmath.exp(-t * t / 2) / mpmath.sqrt(2 * mpmath.pi), [-mpmath.inf, x])
        assert normal_cdf(x) == pytest.approx(float(ref), abs=1e-12, rel=1e-10)
    # frozen from the quadrature above
    assert normal_cdf(-2.22935) == pytest.approx(0.01289531313029358, abs=1e-12)


@given(st.floats(-30, 30))
def test_normal_cdf_symmetry(x):
    assert normal_cdf(x) + normal_cdf(-x) == pytest.approx(1.0, abs=1e-15)


def test_false_selection_bound():
    b50 = false_selection_bound(12, 3, 50, universal_lambda(1, 12, 50))
    b100 = false_selection_bound(12, 3, 100, universal_lambda(1, 12, 100))
    assert b50 == pytest.approx(0.232, abs=1e-3)
    assert b50 == pytest.approx(0.23214088385092296, abs=1e-12)
    assert b100 == pytest.approx(b50, abs=1e-14)
    vals = [false_selection_bound(12, 3, 50, lam) for lam in np.linspace(0.1, 3, 30)]
    assert np.all(np.diff(vals) < 0) and vals[-1] < 1e-30
    with pytest.raises(ValueError):
        false_selection_bound(3, 3, 50, 0.3)


def test_unbiasedness_ceiling():
    assert unbiasedness_lambda_ceiling(1.5, 3.7, 12, 50) == pytest.approx(1.82, abs=0.01)
    assert unbiasedness_lambda_ceiling(1.5, 3.7, 12, 100) == pytest.approx(2.57, abs=0.01)
    assert unbiasedness_lambda_ceiling(3.0, 3.7, 12, 50) == pytest.approx(
        2 * unbiasedness_lambda_ceiling(1.5, 3.7, 12, 50)
    )


def test_oracle_lse_examples():
    rng = np.random.default_rng(0)
    d = standardize(orthonormal_design(rng, 20, 5))
    y = rng.standard_normal(20)
    beta = oracle_lse(d, y, [0, 3])
    np.testing.assert_allclose(beta[[0, 3]], (d.X.T @ y / 20)[[0, 3]], atol=1e-12)
    assert beta[[1, 2, 4]].tolist() == [0, 0, 0]
    np.testing.assert_array_equal(oracle_lse(d, y, []), 0.0)
    d2 = standardize(rng.standard_normal((30, 6)))
    truth = np.array([1.0, 0, -2.0, 0, 0, 0.5])
    np.testing.assert_allclose(oracle_lse(d2, d2.X @ truth, [0, 2, 5]), truth, atol=1e-12)


def test_oracle_lse_residual_orthogonality():
    rng = np.random.default_rng(1)
    d = standardize(rng.standard_normal((40, 10)))
    y = rng.standard_normal(40)
    A = [1, 4, 7]
    r = y - d.X @ oracle_lse(d, y, A)
    np.testing.assert_allclose(d.X[:, A].T @ r, 0.0, atol=1e-10)


def test_oracle_lse_rank_deficient():
    X = np.random.default_rng(2).standard_normal((10, 3))
    X[:, 2] = X[:, 0]
    with pytest.raises(np.linalg.LinAlgError):
        oracle_lse(standardize(X), np.ones(10), [0, 2])


def test_model_error():
    truth = ModelTruth(np.array([1.0, 0.0, 2.0]))
    assert model_error(truth.beta, truth, np.eye(3)) == 0.0
    assert model_error(truth.beta + [0, 1, 0], truth, np.eye(3)) == 1.0
    rng = np.random.default_rng(3)
    B = rng.standard_normal((4, 4))
    S = B @ B.T
    bh, b = rng.standard_normal(4), rng.standard_normal(4)
    ref = sum((bh[i] - b[i]) * S[i, j] * (bh[j] - b[j]) for i in range(4) for j in range(4))
    assert model_error(bh, b, S) == pytest.approx(ref, rel=1e-12)
    with pytest.raises(ValueError):
        model_error(bh, b, B)


def test_selection_metrics_examples():
    truth = ModelTruth(np.array([1.0, -1.0, 2.0, 0.0, 0.0]))
    m = selection_metrics(fit_of([0.5, -0.2, 1.0, 0, 0]), truth)
    assert (m.tm, m.cs, m.sign_consistent, m.false_inclusion) == (0, True, True, False)
    m = selection_metrics(fit_of(np.zeros(5)), truth)
    assert m.tm == 3 and not m.cs
    m = selection_metrics(fit_of([1.0, 1.0, 0, 1.0, 0]), truth)
    assert m.tm == 2 and not m.cs and m.false_inclusion
    m = selection_metrics(fit_of([1.0, 1.0, 1.0, 0, 0]), truth)
    assert m.cs and not m.sign_consistent


@given(st.lists(st.sampled_from([-1.0, 0.0, 2.0]), min_size=6, max_size=6), st.lists(st.sampled_from([-1.0, 0.0, 1.0]), min_size=6, max_size=6))
def test_selection_metric_implications(bh, b):
    m = selection_metrics(fit_of(bh), ModelTruth(np.array(b)))
    if m.cs:
        assert m.tm == 0
    if m.sign_consistent:
        assert m.cs


def test_truth_summaries():
    t = ModelTruth(np.array([0, 1.5, -2.0, 0]))
    assert t.support == (1, 2) and t.d_o == 2 and t.beta_star == 1.5


def test_estimate_sigma_arithmetic():
    n, p = 100, 10
    X = np.zeros((n, p))
    X[np.arange(p), np.arange(p)] = 1.0
    d = standardize(X)
    r = np.zeros(n)
    r[p:] = 1.0
    assert r @ r == 90.0
    beta = np.ones(p)
    y = d.X @ beta + r
    assert estimate_sigma(d, y, fit_of(beta)) == pytest.approx(1.0, abs=1e-12)
    assert estimate_sigma(d, d.X @ beta, fit_of(beta)) == 0.0
    small = standardize(np.random.default_rng(0).standard_normal((3, 4)))
    with pytest.raises(ValueError):
        estimate_sigma(small, np.ones(3), fit_of(np.ones(4)))


def test_estimate_sigma_concentration_for_oracle_fit():
    rng = np.random.default_rng(4)
    n, p, reps = 100, 10, 400
    hits = 0
    for _ in range(reps):
        d = standardize(rng.standard_normal((n, p)))
        beta = np.r_[np.ones(3), np.zeros(p - 3)]
        y = d.X @ beta + rng.standard_normal(n)
        fit = oracle_lse(d, y, [0, 1, 2])
        # sd of a chi-square based sigma estimate is about 1/sqrt(2 (n - df))
        hits += abs(estimate_sigma(d, y, fit) - 1.0) <= 3 / math.sqrt(2 * (n - 3))
    assert hits / reps >= 0.99


def test_unbiasedness_region_identity():
    rng = np.random.default_rng(5)
    n, p = 60, 8
    checked = 0
    for _ in range(30):
        d = standardize(rng.standard_normal((n, p)))
        beta = np.r_[3.0, -3.0, 3.0, np.zeros(p - 3)]
        y = d.X @ beta + 0.5 * rng.standard_normal(n)
        for pen, gamma in ((make_mcp(2.5), 2.5), (make_scad(3.7), 3.7)):
            path = compute_path(d, y, pen)
            lam = 0.3
            fit = solve_at_lambda(path, lam)
            oracle = oracle_lse(d, y, [0, 1, 2])
            if fit.support == (0, 1, 2) and np.abs(oracle[:3]).min() > gamma * lam:
                checked += 1
                np.testing.assert_allclose(fit.beta_hat, oracle, atol=1e-8)
    assert checked >= 20
