from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.special import gamma

from fracgronwall.errors import ConvergenceError, DomainError, HypothesisError
from fracgronwall.gronwall import (
    BoundCurve,
    MixedBoundParams,
    apply_operator_B,
    classical_bound,
    fractional_bound,
    log_double_sum,
    log_double_sum_certificate,
    log_operator_power_bound,
    mixed_bound_closed,
    mixed_bound_series,
    mixed_series_partial_sums,
    operator_power_bound,
)
from fracgronwall.grids import SampledFn, TimeGrid
from fracgronwall.singquad import abel_weights, solve_volterra

GRID = TimeGrid(1.0, 256)


def const(c, grid=GRID):
    return SampledFn.constant(grid, c)


def test_classical_closed_form_and_general_form_agree_for_constant_h():
    h, k = const(2.0), SampledFn.from_callable(GRID, lambda t: 1 + t)
    closed = classical_bound(h, k, nondecreasing_h=True).values
    general = classical_bound(h, k, nondecreasing_h=False).values
    expected = 2.0 * np.exp(GRID.nodes + GRID.nodes**2 / 2)
    np.testing.assert_allclose(closed, expected, rtol=1e-5)
    np.testing.assert_allclose(general, expected, rtol=1e-4)


def test_classical_rejects_false_monotonicity_claim():
    with pytest.raises(HypothesisError):
        classical_bound(SampledFn.from_callable(GRID, lambda t: 1 - t), const(1.0), nondecreasing_h=True)


def test_fractional_series_equals_closed_form_for_constant_a():
    p = MixedBoundParams(0.5, 1.0)
    a, g = const(1.0), const(0.7)
    series = fractional_bound(a, g, 0.5, False, p)
    closed = fractional_bound(a, g, 0.5, True, p)
    np.testing.assert_allclose(series.values, closed.values, rtol=1e-11)
    assert np.all(series.tail_bound <= 1e-12 * series.values)


# Mixed series for a=1 and constant b, g, summed to 400 terms in 40-digit mpmath.
@pytest.mark.parametrize(
    "alpha, b, g, t, expected",
    [
        (0.5, 0.5, 0.5, 1.0, 7.7128313794083826016),
        (0.75, 0.25, 0.5, 0.5, 1.7322150348220084257),
    ],
)
def test_mixed_series_reference_values(alpha, b, g, t, expected):
    grid = TimeGrid(t, 64)
    curve = mixed_bound_series(const(1.0, grid), const(b, grid), const(g, grid), MixedBoundParams(alpha, 1.0))
    assert curve.values[-1] == pytest.approx(expected, rel=1e-12)
    assert curve.upper[-1] >= expected * (1 - 1e-15)


def test_mixed_closed_reference_value():
    # E_{1/2}(Gamma(1/2)) e^2 from a 40-digit mpmath series.
    grid = TimeGrid(1.0, 16)
    curve = mixed_bound_closed(const(1.0, grid), const(1.0, grid), const(1.0, grid), 0.5)
    assert curve.values[-1] == pytest.approx(339.89160098745416378, rel=1e-14)


@pytest.mark.parametrize("alpha", [0.25, 0.5, 0.9])
def test_series_never_exceeds_closed_form_for_monotone_a(alpha):
    a = SampledFn.from_callable(GRID, lambda t: 1 + 2 * t)
    b, g = const(0.5), const(0.5)
    series = mixed_bound_series(a, b, g, MixedBoundParams(alpha, 1.0))
    closed = mixed_bound_closed(a, b, g, alpha)
    assert np.all(series.upper <= closed.values * (1 + 1e-12))


def test_series_equals_exact_solution_for_constant_coefficients():
    # With constant b, g the series is the exact solution of u = a + B u, and the
    # Volterra solver converges to it as the grid is refined.
    alpha = 0.75
    diffs = []
    for n in (256, 1024):
        grid = TimeGrid(1.0, n)
        a, b, g = const(1.0, grid), const(0.5, grid), const(0.5, grid)
        s = mixed_bound_series(a, b, g, MixedBoundParams(alpha, 1.0)).values
        u = solve_volterra(a, b, g, alpha).values
        diffs.append(np.max(np.abs(s - u) / s))
    assert diffs[1] < diffs[0] < 1e-3


def test_tail_certificate_covers_the_truncation():
    a, b, g = SampledFn.from_callable(GRID, lambda t: 1 + t), const(0.5), const(0.5)
    alpha = 0.5
    sums = mixed_series_partial_sums(a, b, g, alpha, 120)
    curve = mixed_bound_series(a, b, g, MixedBoundParams(alpha, 1.0, series_tol=1e-6))
    n = curve.n_terms
    assert n < 120
    # The far partial sum stands in for the full series.
    assert np.all(sums[-1] <= curve.upper * (1 + 1e-14))
    assert np.all(sums[n] == curve.values) or np.allclose(sums[n], curve.values, rtol=1e-15)
    assert np.all(curve.tail_bound >= sums[-1] - sums[n] - 1e-15 * sums[-1])
    assert set(curve.info) >= {"tail_power_max", "tail_sharp_max"}


def test_series_budget_raises():
    with pytest.raises(ConvergenceError):
        mixed_bound_series(const(1.0), const(0.5), const(0.5), MixedBoundParams(0.5, 1.0, n_max=8))


def test_hypothesis_violations_are_named():
    with pytest.raises(HypothesisError, match="b\\(t\\) >= 0"):
        mixed_bound_series(const(1.0), const(-0.1), const(0.5), MixedBoundParams(0.5, 1.0))
    with pytest.raises(HypothesisError, match="nondecreasing"):
        mixed_bound_closed(const(1.0), const(0.1), SampledFn.from_callable(GRID, lambda t: 1 - t), 0.5)
    with pytest.raises(HypothesisError, match="M_cap"):
        mixed_bound_series(const(1.0), const(2.0), const(0.5), MixedBoundParams(0.5, 1.0))
    with pytest.raises(HypothesisError, match="a\\(t\\)"):
        mixed_bound_closed(SampledFn.from_callable(GRID, lambda t: 2 - t), const(0.1), const(0.1), 0.5)


def test_params_and_curve_validation():
    with pytest.raises(DomainError):
        MixedBoundParams(1.0, 1.0)
    with pytest.raises(DomainError):
        MixedBoundParams(0.5, 0.0)
    with pytest.raises(DomainError):
        MixedBoundParams(0.5, 1.0, series_tol=0.1)
    with pytest.raises(DomainError):
        BoundCurve(GRID, np.ones(3), np.zeros(3))
    with pytest.raises(DomainError):
        BoundCurve(GRID, -np.ones(len(GRID)), np.zeros(len(GRID)))


def test_extremal_solution_is_a_fixed_point_of_operator_B():
    alpha = 0.5
    a, b, g = SampledFn.from_callable(GRID, lambda t: 1 + t), const(0.3), const(0.4)
    w = abel_weights(alpha, GRID)
    u = solve_volterra(a, b, g, alpha, w)
    Bu = apply_operator_B(u, b, g, w)
    np.testing.assert_allclose(u.values, a.values + Bu.values, rtol=1e-12)


def test_operator_power_bound_formula():
    n, b, g, alpha, t, ui = 5, 0.3, 0.2, 0.5, 2.0, 1.5
    expected = gamma(alpha) ** n * max(t ** (n * alpha - 1), t**n) * (b + g) ** n / gamma(n * alpha) * ui
    assert operator_power_bound(n, b, g, alpha, t, ui) == pytest.approx(expected, rel=1e-13)
    assert operator_power_bound(3, 0.0, 0.0, alpha, t, ui) == 0.0
    with pytest.raises(DomainError):
        operator_power_bound(3, -1.0, 0.0, alpha, t, ui)


@given(st.sampled_from([0.25, 0.5, 0.75, 0.9]), st.floats(0.1, 1.0), st.floats(0.1, 2.0))
def test_operator_power_bound_vanishes_eventually(alpha, s, t):
    n = np.arange(1, 40001, dtype=float)
    logs = log_operator_power_bound(n, s / 2, s / 2, alpha, t, 1.0)
    assert logs[-1] < logs.max() - 20


@given(
    st.sampled_from([0.25, 0.5, 0.75, 0.9]),
    st.floats(0.05, 3.0),
    st.floats(0.05, 3.0),
    st.integers(0, 80),
)
def test_double_sum_below_certificate(alpha, M, tau, n_terms):
    assert log_double_sum(M, alpha, tau, n_terms) <= log_double_sum_certificate(M, alpha, tau) + 1e-12


def test_double_sum_first_terms_by_hand():
    M, alpha, tau = 0.5, 0.5, 2.0
    assert log_double_sum(M, alpha, tau, 0) == pytest.approx(0.0, abs=1e-15)
    one = 1 + M * tau + M * gamma(alpha) * tau**alpha / gamma(alpha + 1)
    assert math.exp(log_double_sum(M, alpha, tau, 1)) == pytest.approx(one, rel=1e-14)
