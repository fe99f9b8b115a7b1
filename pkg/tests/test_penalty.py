import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from plusreg.penalty import (
    QuadSplinePenalty,
    firm_threshold,
    make_l1,
    make_mcp,
    make_scad,
    scad_threshold,
    soft_threshold,
)

from oracles import grid_minimizer, l1_value, mcp_value, scad_value

PENALTIES = [make_l1(), make_mcp(0.5), make_mcp(2.0), make_mcp(3.7), make_scad(2.5), make_scad(3.7)]


def test_l1_examples():
    pen = make_l1()
    assert pen.m == 1 and pen.knots == (0.0,)
    assert pen.gamma == math.inf
    assert pen.deriv(5.0) == 1.0
    assert pen.value(2.0) == 2.0
    assert pen.max_concavity() == 0.0
    assert pen.value(3.0, 0.5) == pytest.approx(1.5, abs=1e-15)


def test_mcp_examples():
    pen = make_mcp(2.0)
    assert pen.m == 2 and pen.knots == (0.0, 2.0)
    assert pen.deriv(1.0) == 0.5
    assert pen.deriv(3.0) == 0.0
    # quadrature of (1 - x/gamma)_+ on [0, 2]
    assert pen.value(2.0) == pytest.approx(1.0, abs=1e-12)
    assert pen.value(4.0, 2.0) == pytest.approx(4.0, abs=1e-12)
    assert make_mcp(3.7).value(0.0, 1.0) == 0.0
    assert make_mcp(3.7).max_concavity() == pytest.approx(1 / 3.7, abs=1e-15)


def test_scad_examples():
    pen = make_scad(3.7)
    assert pen.knots == (0.0, 1.0, 3.7)
    assert pen.deriv(0.5) == 1.0
    assert pen.deriv(2.0) == pytest.approx(0.6296296296296297, abs=1e-12)
    assert pen.deriv(10.0, 1.0) == 0.0
    assert pen.max_concavity() == pytest.approx(1 / 2.7, abs=1e-15)
    assert make_scad(2.5).max_concavity() == pytest.approx(1 / 1.5, abs=1e-15)


@pytest.mark.parametrize("bad", [0.0, -1.0])
def test_mcp_rejects_nonpositive_gamma(bad):
    with pytest.raises(ValueError):
        make_mcp(bad)


@pytest.mark.parametrize("bad", [2.0, 1.5])
def test_scad_rejects_small_gamma(bad):
    with pytest.raises(ValueError):
        make_scad(bad)


def test_deriv_zero_plus_and_domain():
    assert make_mcp(3.7).deriv_zero_plus(0.3) == pytest.approx(0.3)
    with pytest.raises(ValueError):
        make_mcp(2.0).deriv(0.0, 1.0)
    with pytest.raises(ValueError):
        make_mcp(2.0).value(-1.0, 1.0)


def test_zero_level_is_degenerate_but_defined():
    pen = make_scad(3.7)
    assert pen.value(2.0, 0.0) == 0.0
    assert pen.deriv(2.0, 0.0) == 0.0


def test_right_limit_at_knot():
    pen = make_mcp(2.0)
    assert pen.unit_curvature(2.0) == 0.0
    assert pen.unit_curvature(2.0, conservative=True) == -0.5
    assert make_scad(3.7).segment_of(1.0) == 1


def test_value_matches_quadrature_of_derivative():
    for pen in PENALTIES:
        for t in (0.3, 1.0, 2.7, 5.0):
            ref = quad(lambda x: pen.unit_deriv(x), 0, t, points=[k for k in pen.knots if 0 < k < t] or None)[0]
            assert pen.unit_value(t) == pytest.approx(ref, abs=1e-10)


def test_matches_textbook_penalty_formulas():
    t = np.linspace(0, 8, 81)
    for lam in (0.3, 1.0, 2.0):
        np.testing.assert_allclose(make_mcp(2.0).value(t, lam), mcp_value(t, lam, 2.0), atol=1e-12)
        np.testing.assert_allclose(make_scad(3.7).value(t, lam), scad_value(t, lam, 3.7), atol=1e-12)
        np.testing.assert_allclose(make_l1().value(t, lam), l1_value(t, lam), atol=1e-12)


@settings(max_examples=200, deadline=None)
@given(t=st.floats(0.0, 10.0, exclude_min=True), lam=st.floats(0.01, 10.0), idx=st.integers(0, len(PENALTIES) - 1))
def test_scaling_identity(t, lam, idx):
    pen = PENALTIES[idx]
    assert pen.value(t, lam) == pytest.approx(lam**2 * pen.value(t / lam, 1.0), rel=1e-12, abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(t=st.floats(0.05, 10.0), lam=st.floats(0.1, 5.0), idx=st.integers(0, len(PENALTIES) - 1))
def test_derivative_matches_finite_differences(t, lam, idx):
    pen = PENALTIES[idx]
    h = 1e-6
    if any(abs(t / lam - k) < 10 * h / lam for k in pen.knots[1:]):
        return
    fd = (pen.value(t + h, lam) - pen.value(t - h, lam)) / (2 * h)
    assert pen.deriv(t, lam) == pytest.approx(fd, abs=1e-6)


@pytest.mark.parametrize("pen", [p for p in PENALTIES if p.name != "l1"], ids=lambda p: f"{p.name}{p.gamma}")
def test_threshold_constraints(pen):
    for lam in (0.1, 1.0, 3.0):
        assert pen.deriv_zero_plus(lam) == lam
        t = pen.gamma * lam * np.array([1.0, 1.5, 10.0])
        np.testing.assert_array_equal(pen.deriv(t, lam), 0.0)


@pytest.mark.parametrize("pen", [p for p in PENALTIES if p.name != "l1"], ids=lambda p: f"{p.name}{p.gamma}")
def test_minimax_concavity(pen):
    kappa = pen.max_concavity()
    assert kappa >= 1 / pen.gamma - 1e-15
    if pen.name == "mcp":
        assert kappa == pytest.approx(1 / pen.gamma, abs=1e-15)
    else:
        assert kappa > 1 / pen.gamma


@pytest.mark.parametrize("pen", PENALTIES, ids=lambda p: f"{p.name}{p.gamma}")
def test_monotone_value_and_derivative(pen):
    t = np.linspace(1e-3, 10, 500)
    assert np.all(np.diff(pen.value(t, 1.3)) >= -1e-15)
    assert np.all(np.diff(pen.deriv(t, 1.3)) <= 1e-15)
    assert np.all(pen.deriv(t, 1.3) >= 0)


def test_rejects_bad_splines():
    with pytest.raises(ValueError):
        QuadSplinePenalty("x", (0.0, 1.0), ((1.0, -1.0), (0.5, 0.0)))  # derivative jumps
    with pytest.raises(ValueError):
        QuadSplinePenalty("x", (0.0,), ((2.0, 0.0),))  # rho'(0+) != 1
    with pytest.raises(ValueError):
        QuadSplinePenalty("x", (0.5,), ((1.0, 0.0),))


@pytest.mark.parametrize("z", [-4.0, -2.5, -1.2, -0.3, 0.0, 0.7, 1.05, 1.9, 2.6, 3.5, 8.0])
def test_closed_form_thresholds_against_grid_search(z):
    lam = 1.0
    assert soft_threshold(z, lam) == pytest.approx(grid_minimizer(z, lam, l1_value), abs=2e-4)
    g = 3.0
    ref = grid_minimizer(z, lam, lambda t, l: mcp_value(t, l, g))
    assert firm_threshold(z, lam, g) == pytest.approx(ref, abs=2e-4)
    g = 3.7
    ref = grid_minimizer(z, lam, lambda t, l: scad_value(t, l, g))
    assert scad_threshold(z, lam, g) == pytest.approx(ref, abs=2e-4)
