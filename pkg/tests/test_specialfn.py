from __future__ import annotations

import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.special import erfcx

from fracgronwall.errors import ConvergenceError, DomainError
from fracgronwall.specialfn import (
    ASYMPTOTIC_EXPONENT,
    MLParams,
    binomial,
    gamma_fn,
    log_binomial,
    log_gamma,
    log_mittag_leffler,
    mittag_leffler,
    mittag_leffler_array,
)

# Reference values from a 40-digit mpmath summation of the defining series.
ML_REFERENCE = [
    (1.0, 0.5, 5.0089800807622834663),
    (0.5, 0.25, 2.0796142210090508739),
    (2.0, 0.75, 16.477360564726636035),
    (7.0, 0.5, 3.8146931449901993811e21),
    (3.0, 0.9, 32.921897176850824779),
    (10.0, 0.9, 451737.77456773740187),
    (1.5, 0.3, 158.07887059078352601),
]


def _ml_mpmath(z: float, alpha: float) -> mp.mpf:
    with mp.workdps(40):
        z, a = mp.mpf(z), mp.mpf(alpha)
        total, k = mp.mpf(0), 0
        while True:
            term = z**k / mp.gamma(a * k + 1)
            total += term
            if k > 5 and term < total * mp.mpf(10) ** -30 and a * k > z ** (1 / a):
                return total
            k += 1


@pytest.mark.parametrize("z, alpha, expected", ML_REFERENCE)
def test_mittag_leffler_reference_values(z, alpha, expected):
    assert mittag_leffler(z, alpha) == pytest.approx(expected, rel=1e-13)


@pytest.mark.parametrize("z", [0.0, 0.3, 1.0, 4.0, 9.0, 25.0])
def test_half_order_matches_erfc_identity(z):
    # E_{1/2}(z) = exp(z^2) erfc(-z), and erfc(-z) = 2 - erfc(z) = 2 - exp(-z^2) erfcx(z)
    expected = 2 * math.exp(z * z) - erfcx(z)
    cond = max(1.0, 2 * z * z)
    assert mittag_leffler(z, 0.5) == pytest.approx(expected, rel=1e-14 * cond)


def test_order_one_is_exponential():
    z = np.linspace(0, 20, 100)
    got = mittag_leffler_array(z, 1.0)
    np.testing.assert_allclose(got, np.exp(z), rtol=1e-14)


def test_zero_argument_is_one():
    for a in (0.1, 0.5, 1.0):
        assert mittag_leffler(0.0, a) == 1.0
        assert log_mittag_leffler(0.0, a) == 0.0


@pytest.mark.parametrize("alpha", [0.2, 0.5, 0.8, 0.95])
@pytest.mark.parametrize("side", [1 - 1e-6, 1 + 1e-6, 1.01, 1.5])
def test_series_and_asymptotic_regimes_near_the_switch(alpha, side):
    z = ASYMPTOTIC_EXPONENT**alpha * side
    ref = float(_ml_mpmath(z, alpha))
    # Condition number of E_alpha at z is about z^(1/alpha) / alpha.
    cond = z ** (1 / alpha) / alpha
    assert mittag_leffler(z, alpha) == pytest.approx(ref, rel=1e-14 * cond)


def test_log_mittag_leffler_never_overflows():
    lg = log_mittag_leffler(200.0, 0.5)  # about exp(40000)
    assert math.isfinite(lg)
    assert lg == pytest.approx(200.0**2 - math.log(0.5), rel=1e-14)
    assert mittag_leffler(200.0, 0.5) == math.inf


@given(st.floats(0.05, 1.0), st.floats(0.0, 30.0), st.floats(0.0, 5.0))
def test_mittag_leffler_is_at_least_one_and_nondecreasing(alpha, z, dz):
    lo = log_mittag_leffler(z, alpha)
    hi = log_mittag_leffler(z + dz, alpha)
    assert lo >= 0.0
    assert hi >= lo - 1e-12 * max(1.0, abs(lo))


@given(st.floats(0.1, 1.0), st.floats(0.0, 12.0))
def test_mittag_leffler_matches_high_precision_series(alpha, z):
    if z ** (1 / alpha) > 400:  # keep the mpmath oracle cheap
        return
    assert mittag_leffler(z, alpha) == pytest.approx(float(_ml_mpmath(z, alpha)), rel=1e-12)


def test_mlparams_validation():
    with pytest.raises(DomainError):
        MLParams(0.0)
    with pytest.raises(DomainError):
        MLParams(1.5)
    with pytest.raises(DomainError):
        MLParams(0.5, rel_tol=0.1)
    with pytest.raises(DomainError):
        MLParams(0.5, max_terms=3)
    with pytest.raises(DomainError):
        mittag_leffler(-1.0, 0.5)
    with pytest.raises(DomainError):
        mittag_leffler(math.nan, 0.5)


def test_series_budget_exhaustion_raises():
    with pytest.raises(ConvergenceError):
        mittag_leffler(5.0, MLParams(0.9, max_terms=16))


@given(st.floats(1e-3, 170.0))
def test_gamma_recurrence(x):
    assert gamma_fn(x + 1) == pytest.approx(x * gamma_fn(x), rel=1e-12)


def test_gamma_against_mpmath_and_overflow():
    for x in (0.1, 0.5, 1.0, 3.7, 50.25, 170.5):
        assert gamma_fn(x) == pytest.approx(float(mp.gamma(x)), rel=1e-13)
        assert log_gamma(x) == pytest.approx(float(mp.loggamma(x)), rel=1e-13, abs=1e-15)
    assert gamma_fn(200.0) == math.inf
    assert math.isfinite(log_gamma(1e5))
    for bad in (0.0, -1.0, math.inf, math.nan):
        with pytest.raises(DomainError):
            gamma_fn(bad)


def test_binomial_matches_pascal_triangle():
    row = [1]
    for n in range(1, 61):
        row = [1] + [row[i - 1] + row[i] for i in range(1, n)] + [1]
        for i, v in enumerate(row):
            assert binomial(n, i) == pytest.approx(float(v), rel=1e-13)
            assert log_binomial(n, i) == pytest.approx(math.log(v), rel=1e-12, abs=1e-12)


def test_binomial_domain():
    assert binomial(5, 0) == 1.0
    assert binomial(2000, 1000) == math.inf or binomial(2000, 1000) > 1e300
    for n, i in ((3, 4), (3, -1), (2.5, 1)):
        with pytest.raises(DomainError):
            binomial(n, i)
