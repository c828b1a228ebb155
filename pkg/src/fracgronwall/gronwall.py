"""Gronwall-Bellman bound evaluators.

Three families of bounds for nonnegative ``u`` satisfying a linear integral
inequality on ``[0, T]``:

* classical: ``u <= h + int_0^t k u``;
* fractional: ``u <= a + g(t) int_0^t (t-s)**(alpha-1) u``;
* mixed: ``u <= a + b(t) int_0^t u + g(t) int_0^t (t-s)**(alpha-1) u``.

The mixed series bound is

.. math::

    a(t) + \\sum_{n\\ge1}\\sum_{i=0}^{n} \\binom{n}{i} b^{n-i} (g\\Gamma(\\alpha))^{i}
    \\, I^{i\\alpha + n - i} a(t),

where ``I^beta`` is the Riemann-Liouville integral.  Every kernel integral is
done in closed form against the piecewise-linear interpolant of ``a`` (see
:func:`fracgronwall.singquad.rl_integral`), so the only approximation is the
truncation in ``n``, which is certified by an explicit tail bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np
from scipy.special import gammainc, gammaln

from .errors import ConvergenceError, DomainError, HypothesisError
from .grids import SampledFn, TimeGrid, check_alpha, same_grid
from .singquad import AbelWeights, regular_integral, rl_integral
from .specialfn import MLParams, log_mittag_leffler, mittag_leffler_array

__all__ = [
    "MixedBoundParams",
    "BoundCurve",
    "classical_bound",
    "fractional_bound",
    "mixed_bound_series",
    "mixed_series_partial_sums",
    "mixed_bound_closed",
    "apply_operator_B",
    "operator_power_bound",
    "log_operator_power_bound",
    "log_double_sum",
    "log_double_sum_certificate",
]

MONOTONE_TOL = 1e-12
_TAIL_BLOCK = 512
_TAIL_MAX_TERMS = 1 << 16


@dataclass(frozen=True)
class MixedBoundParams:
    alpha: float
    M_cap: float
    series_tol: float = 1e-12
    n_max: int = 4000

    def __post_init__(self) -> None:
        check_alpha(self.alpha)
        if not (math.isfinite(self.M_cap) and self.M_cap > 0):
            raise DomainError(f"M_cap must be finite and > 0, got {self.M_cap!r}")
        if not (0.0 < self.series_tol <= 1e-4):
            raise DomainError(f"series_tol must lie in (0, 1e-4], got {self.series_tol!r}")
        if int(self.n_max) != self.n_max or self.n_max < 8:
            raise DomainError(f"n_max must be an integer >= 8, got {self.n_max!r}")


@dataclass(frozen=True)
class BoundCurve:
    """Bound values on a grid plus a certified truncation remainder per node."""

    grid: TimeGrid
    values: np.ndarray
    tail_bound: np.ndarray
    n_terms: int = 0
    info: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=float)
        tb = np.asarray(self.tail_bound, dtype=float)
        if v.shape != (len(self.grid),) or tb.shape != v.shape:
            raise DomainError("bound curve arrays must match the grid")
        if np.any(v < 0) or np.any(tb < 0) or not np.all(np.isfinite(tb)):
            raise DomainError("bound values and tail must be nonnegative, tail finite")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "tail_bound", tb)

    @property
    def upper(self) -> np.ndarray:
        return self.values + self.tail_bound


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise HypothesisError(message)


def _check_profiles(a: SampledFn, b: SampledFn | None, g: SampledFn | None, M_cap: float | None) -> None:
    _require(a.is_nonnegative(), "hypothesis violated: a(t) >= 0")
    for name, f in (("b", b), ("g", g)):
        if f is None:
            continue
        _require(f.is_nonnegative(), f"hypothesis violated: {name}(t) >= 0")
        _require(f.is_nondecreasing(MONOTONE_TOL), f"hypothesis violated: {name}(t) nondecreasing")
        if M_cap is not None:
            _require(float(np.max(f.values)) <= M_cap, f"hypothesis violated: {name}(t) <= M_cap={M_cap}")


def _safe_log(x: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(x)


def _power_log(k: np.ndarray, logv: np.ndarray) -> np.ndarray:
    """``k * logv`` with ``0 * -inf = 0`` (so ``0**0 = 1``)."""
    k = np.asarray(k, dtype=float)[:, None]
    with np.errstate(invalid="ignore"):
        out = k * logv[None, :]
    return np.where(k == 0, 0.0, out)


class _KahanRows:
    """Compensated accumulation of node-wise rows, ascending in ``n``."""

    def __init__(self, start: np.ndarray):
        self.total = np.array(start, dtype=float)
        self._comp = np.zeros_like(self.total)

    def add(self, row: np.ndarray) -> None:
        y = row - self._comp
        t = self.total + y
        self._comp = (t - self.total) - y
        self.total = t


# --------------------------------------------------------------------------
# classical and fractional bounds
# --------------------------------------------------------------------------


def classical_bound(h: SampledFn, k: SampledFn, nondecreasing_h: bool) -> BoundCurve:
    """Bound for ``x <= h + int_0^t k x`` with ``k >= 0``.

    With ``nondecreasing_h`` the closed form ``h(t) exp(int_0^t k)``; otherwise
    ``h(t) + int_0^t h(s) k(s) exp(int_s^t k) ds`` by trapezoid.
    """
    grid = same_grid(h.grid, k.grid)
    _require(k.is_nonnegative(), "k(t) must be nonnegative")
    K = regular_integral(k).values
    if nondecreasing_h:
        _require(h.is_nondecreasing(MONOTONE_TOL), "h(t) was declared nondecreasing but is not")
        values = h.values * np.exp(K)
    else:
        integrand = SampledFn(grid, h.values * k.values * np.exp(-K))
        values = h.values + np.exp(K) * regular_integral(integrand).values
    return BoundCurve(grid, values, np.zeros(len(grid)), info={"kind": "classical"})


def _ml_factor(g: SampledFn, alpha: float) -> np.ndarray:
    t = g.grid.nodes
    return mittag_leffler_array(g.values * math.gamma(alpha) * t**alpha, MLParams(alpha))


def _sharp_tail(n_done: int, a: SampledFn, b: np.ndarray, g: np.ndarray, alpha: float) -> np.ndarray:
    """Upper bound on all mixed-series rows ``n > n_done``.

    Uses ``I^beta a(t) <= max_{[0,t]} a * t**beta / Gamma(beta+1)`` and
    ``C(n,i) / Gamma(i alpha + k + 1) <= 1 / (Gamma(i alpha + 1) alpha**k k!)``
    with ``k = n - i``, which turns the remainder into
    ``A(t) * sum_i x_i * sum_{k > n_done - i} y**k / k!`` with
    ``x_i = (g Gamma(alpha) t**alpha)**i / Gamma(i alpha + 1)`` and ``y = b t / alpha``.
    The inner exponential tail is a regularized incomplete Gamma function.
    """
    t = a.grid.nodes
    A = np.maximum.accumulate(a.values)
    logx = _safe_log(g * math.gamma(alpha) * t**alpha)
    y = b * t / alpha
    total = np.zeros_like(t)
    start = 0
    while True:
        i = np.arange(start, start + _TAIL_BLOCK)
        logterm = _power_log(i, logx) - gammaln(i * alpha + 1.0)[:, None]
        order = (n_done - i + 1)[:, None]
        with np.errstate(divide="ignore"):
            log_inner = np.where(order >= 1, y[None, :] + np.log(gammainc(np.maximum(order, 1), y[None, :])), y[None, :])
        block = np.exp(logterm + log_inner)
        total += block.sum(axis=0)
        start += _TAIL_BLOCK
        # x_i / Gamma(i alpha + 1) is eventually decreasing; stop once the last
        # term is negligible everywhere and we are past the order threshold.
        last = block[-1]
        decreasing = (logterm[-1] <= logterm[-2]) | ~np.isfinite(logterm[-1])
        if start > n_done + 1 and np.all(decreasing) and np.all(last <= 1e-18 * np.maximum(total, 1e-300)):
            break
        if start > _TAIL_MAX_TERMS:
            return np.full_like(t, np.inf)
    return A * total


def _power_tail(n_done: int, a: SampledFn, b: np.ndarray, g: np.ndarray, alpha: float) -> np.ndarray:
    """Sum of the operator-power majorant over ``n > n_done``; ``inf`` where invalid or unresolved."""
    t = a.grid.nodes
    if (n_done + 1) * alpha < 2.0:
        return np.full_like(t, np.inf)
    u_int = regular_integral(a).values
    total = np.zeros_like(t)
    done = np.zeros(t.size, dtype=bool)
    start = n_done + 1
    while start <= n_done + _TAIL_MAX_TERMS:
        n = np.arange(start, start + _TAIL_BLOCK, dtype=float)
        logs = log_operator_power_bound(n[:, None], b[None, :], g[None, :], alpha, t[None, :], u_int[None, :])
        block = np.exp(logs)
        total += block.sum(axis=0)
        decreasing = logs[-1] <= logs[-2]
        done = decreasing & (block[-1] <= 1e-18 * np.maximum(total, 1e-300)) | (total == 0)
        if np.all(done):
            return total
        start += _TAIL_BLOCK
    return np.where(done, total, np.inf)


def fractional_bound(
    a: SampledFn,
    g: SampledFn,
    alpha: float,
    nondecreasing_a: bool,
    p: MixedBoundParams,
) -> BoundCurve:
    """Bound for ``u <= a + g(t) int_0^t (t-s)**(alpha-1) u``.

    With ``nondecreasing_a`` the closed form ``a(t) E_alpha(g(t) Gamma(alpha) t**alpha)``;
    otherwise the series ``a + sum_n (g Gamma(alpha))**n I^{n alpha} a``, truncated
    once terms fall below ``series_tol`` of the partial sum and the remainder
    certificate does too.
    """
    grid = same_grid(a.grid, g.grid)
    alpha = check_alpha(alpha)
    _check_profiles(a, None, g, p.M_cap)
    if nondecreasing_a:
        _require(a.is_nondecreasing(MONOTONE_TOL), "a(t) was declared nondecreasing but is not")
        values = a.values * _ml_factor(g, alpha)
        return BoundCurve(grid, values, np.zeros(len(grid)), info={"kind": "fractional-closed"})

    logG = _safe_log(g.values * math.gamma(alpha))
    acc = _KahanRows(a.values)
    zeros = np.zeros(len(grid))
    for n in range(1, p.n_max + 1):
        term = rl_integral(a, n * alpha, _power_log(np.array([n]), logG))[0]
        acc.add(term)
        if np.all(term <= p.series_tol * acc.total):
            # Same certificate as the mixed series with b = 0, so the two agree bit for bit.
            tail = np.minimum(_sharp_tail(n, a, zeros, g.values, alpha), _power_tail(n, a, zeros, g.values, alpha))
            if np.all(tail <= p.series_tol * acc.total):
                return BoundCurve(grid, acc.total, tail, n_terms=n, info={"kind": "fractional-series"})
    raise ConvergenceError(f"fractional series not converged within n_max={p.n_max}")


# --------------------------------------------------------------------------
# mixed bound
# --------------------------------------------------------------------------


def _mixed_rows(a: SampledFn, b: SampledFn, g: SampledFn, alpha: float) -> Iterator[np.ndarray]:
    """Yield the node-wise row sums ``sum_i T(n, i)`` for n = 1, 2, ..."""
    logb = _safe_log(b.values)
    logG = _safe_log(g.values * math.gamma(alpha))
    n = 0
    while True:
        n += 1
        i = np.arange(n + 1)
        k = n - i
        beta = i * alpha + k
        logc = gammaln(n + 1.0) - gammaln(i + 1.0) - gammaln(k + 1.0)
        ls = logc[:, None] + _power_log(k, logb) + _power_log(i, logG)
        yield rl_integral(a, beta, ls).sum(axis=0)


def mixed_series_partial_sums(a: SampledFn, b: SampledFn, g: SampledFn, alpha: float, n_terms: int) -> np.ndarray:
    """Partial sums of the mixed series for truncation ``0..n_terms``; shape ``(n_terms+1, nodes)``."""
    same_grid(a.grid, b.grid, g.grid)
    alpha = check_alpha(alpha)
    out = np.empty((n_terms + 1, len(a.grid)))
    acc = _KahanRows(a.values)
    out[0] = acc.total
    rows = _mixed_rows(a, b, g, alpha)
    for n in range(1, n_terms + 1):
        acc.add(next(rows))
        out[n] = acc.total
    return out


def mixed_bound_series(a: SampledFn, b: SampledFn, g: SampledFn, p: MixedBoundParams) -> BoundCurve:
    """Truncated double-series bound for the mixed inequality.

    Rows are accumulated in ascending ``n`` with compensated summation.  The
    sum stops at the first ``n`` where the row is below ``series_tol`` times
    the partial sum at every node *and* the certified remainder is too.  The
    remainder is the smaller of two rigorous bounds: the operator-power
    majorant (valid once ``n alpha >= 2``, driven by ``int_0^t a``) and a
    Mittag-Leffler times exponential-tail bound driven by ``max_{[0,t]} a``.
    Both are reported in ``info``.
    """
    grid = same_grid(a.grid, b.grid, g.grid)
    alpha = p.alpha
    _check_profiles(a, b, g, p.M_cap)
    acc = _KahanRows(a.values)
    rows = _mixed_rows(a, b, g, alpha)
    tol = p.series_tol
    tail = np.full(len(grid), np.inf)
    for n in range(1, p.n_max + 1):
        row = next(rows)
        acc.add(row)
        if not np.all(row <= tol * acc.total):
            continue
        sharp = _sharp_tail(n, a, b.values, g.values, alpha)
        power = _power_tail(n, a, b.values, g.values, alpha)
        tail = np.minimum(sharp, power)
        if np.all(tail <= tol * acc.total):
            info = {
                "kind": "mixed-series",
                "tail_power_max": float(np.max(power)),
                "tail_sharp_max": float(np.max(sharp)),
                "last_row_rel": float(np.max(row / np.where(acc.total > 0, acc.total, 1.0))),
            }
            return BoundCurve(grid, acc.total, tail, n_terms=n, info=info)
    raise ConvergenceError(
        f"mixed series not certified within n_max={p.n_max}: "
        f"max tail {float(np.max(tail)):.3e} vs series_tol*value {tol * float(np.max(acc.total)):.3e}"
    )


def mixed_bound_closed(a: SampledFn, b: SampledFn, g: SampledFn, alpha: float) -> BoundCurve:
    """``a(t) E_alpha(g(t) Gamma(alpha) t**alpha) exp(b(t) t / alpha)`` for nondecreasing ``a``."""
    grid = same_grid(a.grid, b.grid, g.grid)
    alpha = check_alpha(alpha, allow_one=True)
    _check_profiles(a, b, g, None)
    _require(a.is_nondecreasing(MONOTONE_TOL), "a(t) must be nondecreasing for the closed-form bound")
    t = grid.nodes
    values = a.values * _ml_factor(g, alpha) * np.exp(b.values * t / alpha)
    return BoundCurve(grid, values, np.zeros(len(grid)), info={"kind": "mixed-closed"})


def apply_operator_B(phi: SampledFn, b: SampledFn, g: SampledFn, w: AbelWeights) -> SampledFn:
    """``b(t) int_0^t phi + g(t) int_0^t (t-s)**(alpha-1) phi`` on the grid."""
    grid = same_grid(phi.grid, b.grid, g.grid, w.grid)
    reg = regular_integral(phi).values
    sing = w.w @ phi.values
    return SampledFn(grid, b.values * reg + g.values * sing)


# --------------------------------------------------------------------------
# operator-power majorant and the double-sum certificate
# --------------------------------------------------------------------------


def log_operator_power_bound(n, b_cap, g_cap, alpha, t, u_int):
    """Log of ``Gamma(alpha)**n max(t**(n alpha - 1), t**n) (b+g)**n / Gamma(n alpha) * u_int``.

    Broadcasts over array arguments; returns ``-inf`` where the bound is zero.
    """
    n = np.asarray(n, dtype=float)
    s = np.asarray(b_cap, dtype=float) + np.asarray(g_cap, dtype=float)
    t = np.asarray(t, dtype=float)
    u_int = np.asarray(u_int, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        logt = np.log(t)
        logmax = np.maximum((n * alpha - 1.0) * logt, n * logt)
        out = n * math.log(math.gamma(alpha)) + logmax + n * np.log(s) - gammaln(n * alpha) + np.log(u_int)
    zero = (u_int == 0) | (s == 0) | (t == 0)
    out = np.where(zero, -np.inf, out)
    return out if out.ndim else float(out)


def operator_power_bound(n: int, b_cap: float, g_cap: float, alpha: float, t: float, u_int: float) -> float:
    """Scalar majorant of the ``n``-th operator power at time ``t`` given ``int_0^t u = u_int``."""
    if min(n, b_cap, g_cap, t, u_int) < 0 or not (0 < alpha <= 1):
        raise DomainError("operator_power_bound needs nonnegative inputs and 0 < alpha <= 1")
    lg = log_operator_power_bound(n, b_cap, g_cap, alpha, t, u_int)
    return math.exp(lg) if lg < 709.7 else math.inf


def log_double_sum(M: float, alpha: float, tau: float, n_terms: int) -> float:
    """Log of ``sum_{n<=n_terms} sum_i C(n,i) M**n Gamma(alpha)**i tau**(i alpha+n-i) / Gamma(i alpha+n-i+1)``."""
    logs = []
    lg_a = math.log(math.gamma(alpha))
    for n in range(n_terms + 1):
        i = np.arange(n + 1)
        beta = i * alpha + n - i
        lc = gammaln(n + 1.0) - gammaln(i + 1.0) - gammaln(n - i + 1.0)
        logs.append(lc + n * math.log(M) + i * lg_a + beta * math.log(tau) - gammaln(beta + 1.0))
    allv = np.concatenate(logs)
    m = float(np.max(allv))
    return m + math.log(math.fsum(np.exp(allv - m)))


def log_double_sum_certificate(M: float, alpha: float, tau: float) -> float:
    """Log of ``E_alpha(M Gamma(alpha) tau**alpha) * exp(M tau / alpha)``."""
    return log_mittag_leffler(M * math.gamma(alpha) * tau**alpha, MLParams(alpha)) + M * tau / alpha
