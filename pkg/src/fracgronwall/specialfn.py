"""Gamma, binomial and Mittag-Leffler evaluation for nonnegative real arguments.

The Mittag-Leffler function

.. math::

    E_\\alpha(z) = \\sum_{k=0}^{\\infty} \\frac{z^k}{\\Gamma(k\\alpha + 1)}

is only ever needed here for ``z >= 0`` and ``0 < alpha <= 1``.  In that regime
every series term is positive, so plain summation is accurate to a few ulps.
The only numerical hazards are overflow and the number of terms, both of which
are handled by switching to the exponential asymptotic regime once
``z**(1/alpha)`` is large.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, DomainError

__all__ = [
    "MLParams",
    "gamma_fn",
    "log_gamma",
    "binomial",
    "log_binomial",
    "mittag_leffler",
    "log_mittag_leffler",
    "mittag_leffler_array",
    "ASYMPTOTIC_EXPONENT",
]

# Switch to the asymptotic regime once z**(1/alpha) exceeds this.  At 40 the
# neglected exponentially small part is below exp(-40) ~ 4e-18 relative, and the
# series still needs at most a few thousand terms for alpha >= 0.05.
ASYMPTOTIC_EXPONENT = 40.0

_EXACT_BINOMIAL_MAX_N = 50


@dataclass(frozen=True)
class MLParams:
    """Evaluation parameters for :func:`mittag_leffler`.

    Attributes
    ----------
    alpha : float
        Order, in ``(0, 1]``.
    rel_tol : float
        Target relative accuracy, in ``(0, 1e-3]``.
    max_terms : int
        Series budget; at least 16.
    """

    alpha: float
    rel_tol: float = 1e-15
    max_terms: int = 20_000

    def __post_init__(self) -> None:
        if not (math.isfinite(self.alpha) and 0.0 < self.alpha <= 1.0):
            raise DomainError(f"Mittag-Leffler order must lie in (0, 1], got {self.alpha!r}")
        if not (0.0 < self.rel_tol <= 1e-3):
            raise DomainError(f"rel_tol must lie in (0, 1e-3], got {self.rel_tol!r}")
        if int(self.max_terms) != self.max_terms or self.max_terms < 16:
            raise DomainError(f"max_terms must be an integer >= 16, got {self.max_terms!r}")


def _as_params(p: MLParams | float) -> MLParams:
    return p if isinstance(p, MLParams) else MLParams(float(p))


def _check_positive(x: float) -> float:
    x = float(x)
    if not math.isfinite(x) or x <= 0.0:
        raise DomainError(f"argument must be finite and > 0, got {x!r}")
    return x


def gamma_fn(x: float) -> float:
    """Gamma function for finite ``x > 0``; returns ``inf`` past overflow (x > ~171.6)."""
    x = _check_positive(x)
    if x < 171.0:
        return math.gamma(x)
    lg = math.lgamma(x)
    return math.exp(lg) if lg < 709.0 else math.inf


def log_gamma(x: float) -> float:
    """``log(Gamma(x))`` for finite ``x > 0``."""
    return math.lgamma(_check_positive(x))


def binomial(n: int, i: int) -> float:
    """Binomial coefficient ``C(n, i)`` as a float.

    Exact integer arithmetic up to ``n = 50``, log-Gamma beyond.
    """
    n, i = _check_binomial_args(n, i)
    if n <= _EXACT_BINOMIAL_MAX_N:
        return float(math.comb(n, i))
    lg = log_binomial(n, i)
    return math.exp(lg) if lg < 709.0 else math.inf


def log_binomial(n: int, i: int) -> float:
    n, i = _check_binomial_args(n, i)
    return math.lgamma(n + 1) - math.lgamma(i + 1) - math.lgamma(n - i + 1)


def _check_binomial_args(n: int, i: int) -> tuple[int, int]:
    if int(n) != n or int(i) != i:
        raise DomainError("binomial arguments must be integers")
    n, i = int(n), int(i)
    if i < 0 or n < 0 or i > n:
        raise DomainError(f"binomial requires 0 <= i <= n, got n={n}, i={i}")
    return n, i


def _asymptotic_correction(z: float, alpha: float) -> float:
    """Sum of ``z**-k / Gamma(1 - k*alpha)`` for the algebraic part, k >= 1.

    The expansion is asymptotic, so terms are added only while they shrink.
    """
    total = 0.0
    prev = math.inf
    for k in range(1, 30):
        x = 1.0 - k * alpha
        if x <= 0 and x == math.floor(x):
            term = 0.0  # 1/Gamma at a pole
        else:
            term = math.exp(-k * math.log(z)) / math.gamma(x)
        if abs(term) >= prev:
            break
        total += term
        if term != 0.0:
            prev = abs(term)
    return total


def _series(z: float, p: MLParams) -> float:
    if z == 0.0:
        return 1.0
    alpha = p.alpha
    logz = math.log(z)
    total = 1.0
    for k in range(1, p.max_terms):
        term = math.exp(k * logz - math.lgamma(k * alpha + 1.0))
        total += term
        # Past the peak the term ratio is decreasing (log-convexity of Gamma),
        # so the tail is bounded by a geometric series with the next ratio.
        ratio = math.exp(logz + math.lgamma(k * alpha + 1.0) - math.lgamma((k + 1) * alpha + 1.0))
        if ratio < 1.0:
            tail = term * ratio / (1.0 - ratio)
            if tail <= 0.1 * p.rel_tol * total:
                return total
    raise ConvergenceError(
        f"Mittag-Leffler series did not converge in {p.max_terms} terms (z={z}, alpha={alpha})"
    )


def log_mittag_leffler(z: float, p: MLParams | float) -> float:
    """Natural log of ``E_alpha(z)`` for ``z >= 0``; never overflows."""
    p = _as_params(p)
    z = float(z)
    if not math.isfinite(z) or z < 0.0:
        raise DomainError(f"Mittag-Leffler argument must be finite and >= 0, got {z!r}")
    if z == 0.0:
        return 0.0
    alpha = p.alpha
    if alpha == 1.0:
        return z
    w = z ** (1.0 / alpha)
    if w >= ASYMPTOTIC_EXPONENT:
        corr = _asymptotic_correction(z, alpha)
        return w - math.log(alpha) + math.log1p(-alpha * math.exp(-w) * corr)
    return math.log(_series(z, p))


def mittag_leffler(z: float, p: MLParams | float) -> float:
    """One-parameter Mittag-Leffler function ``E_alpha(z)`` for real ``z >= 0``.

    ``p`` is either an :class:`MLParams` or a bare order ``alpha``.  The result
    is ``>= 1`` and nondecreasing in ``z``; it is ``inf`` when the true value
    exceeds the double range (use :func:`log_mittag_leffler` then).
    """
    p = _as_params(p)
    z = float(z)
    if not math.isfinite(z) or z < 0.0:
        raise DomainError(f"Mittag-Leffler argument must be finite and >= 0, got {z!r}")
    if z == 0.0:
        return 1.0
    if p.alpha == 1.0:
        return math.exp(z) if z < 709.7 else math.inf
    w = z ** (1.0 / p.alpha)
    if w < ASYMPTOTIC_EXPONENT:
        return _series(z, p)
    if w < 700.0:
        # Direct form avoids the extra rounding of exp(log(...)).
        return math.exp(w) / p.alpha - _asymptotic_correction(z, p.alpha)
    lg = log_mittag_leffler(z, p)
    return math.exp(lg) if lg < 709.7 else math.inf


def mittag_leffler_array(z, p: MLParams | float) -> np.ndarray:
    """Elementwise :func:`mittag_leffler` over an array of arguments."""
    p = _as_params(p)
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    flat = out.reshape(-1)
    for idx, zi in enumerate(z.reshape(-1)):
        flat[idx] = mittag_leffler(zi, p)
    return out
