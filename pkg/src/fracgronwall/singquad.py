"""Product integration for the Abel kernel ``(t - s)**(alpha - 1)``.

On each subinterval the smooth factor is replaced by its linear interpolant and
integrated against the kernel in closed form, so the diagonal singularity is
never evaluated.  With ``p = alpha + 1`` and ``c = h**alpha / (alpha * p)`` the
row-``n`` weights are::

    w[n, 0] = c * ((n - 1)**p - (n - p) * n**alpha)
    w[n, j] = c * ((m + 1)**p - 2 m**p + (m - 1)**p),   m = n - j,  0 < j < n
    w[n, n] = c

For large ``m`` the second difference loses about ``log10(m)`` digits when
formed naively, so both expressions switch to their binomial series there.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .errors import DomainError, GridMismatchError, HypothesisError, SingularStepError
from .grids import SampledFn, TimeGrid, check_alpha, same_grid

__all__ = [
    "AbelWeights",
    "abel_weights",
    "AbelRows",
    "frac_integral",
    "regular_integral",
    "rl_integral",
    "solve_volterra",
]

_SERIES_FROM = 8
_SERIES_TERMS = 24


def _gen_binom(p: float, kmax: int) -> np.ndarray:
    """Generalized binomial coefficients C(p, k) for k = 0..kmax."""
    out = np.empty(kmax + 1)
    out[0] = 1.0
    for k in range(1, kmax + 1):
        out[k] = out[k - 1] * (p - k + 1) / k
    return out


def _second_difference(m: np.ndarray, p: float) -> np.ndarray:
    """(m+1)**p - 2 m**p + (m-1)**p for integer m >= 1."""
    m = np.asarray(m, dtype=float)
    out = np.empty_like(m)
    small = m < _SERIES_FROM
    ms = m[small]
    out[small] = (ms + 1) ** p - 2 * ms**p + (ms - 1) ** p
    ml = m[~small]
    if ml.size:
        cb = _gen_binom(p, 2 * _SERIES_TERMS)
        inv2 = ml**-2.0
        acc = np.zeros_like(ml)
        for k in range(_SERIES_TERMS, 0, -1):  # Horner in 1/m^2
            acc = (acc + 2.0 * cb[2 * k]) * inv2
        out[~small] = ml**p * acc
    return out


def _first_column(n: np.ndarray, p: float) -> np.ndarray:
    """(n-1)**p - (n-p) * n**(p-1) for integer n >= 1."""
    n = np.asarray(n, dtype=float)
    alpha = p - 1.0
    out = np.empty_like(n)
    small = n < _SERIES_FROM
    ns = n[small]
    out[small] = (ns - 1) ** p - (ns - p) * ns**alpha
    nl = n[~small]
    if nl.size:
        kmax = 2 * _SERIES_TERMS
        cb = _gen_binom(p, kmax)
        inv = 1.0 / nl
        acc = np.zeros_like(nl)
        for k in range(kmax, 1, -1):  # sum_{k>=2} (-1)^k C(p,k) n^(1-k)
            acc = acc * inv + ((-1) ** k) * cb[k]
        out[~small] = nl**alpha * acc * inv
    return out


@dataclass(frozen=True)
class AbelWeights:
    """Lower-triangular product-trapezoid table for the Abel kernel.

    ``w[n, j]`` is the weight of ``phi(t_j)`` in the integral of
    ``(t_n - s)**(alpha - 1) * phi(s)`` over ``[0, t_n]``.
    """

    alpha: float
    grid: TimeGrid
    w: np.ndarray

    def row(self, n: int) -> np.ndarray:
        return self.w[n, : n + 1]

    def explicit(self) -> np.ndarray:
        """Weights that use history nodes only.

        The weight of the current node ``t_n`` is folded onto ``t_{n-1}``, so row
        sums (and exactness for constants) are preserved while row ``n`` needs no
        value at ``t_n``.
        """
        we = self.w.copy()
        n = np.arange(1, len(self.grid))
        we[n, n - 1] += we[n, n]
        we[n, n] = 0.0
        return we


def abel_weights(alpha: float, grid: TimeGrid) -> AbelWeights:
    """Product-trapezoid weights; ``alpha = 1`` gives composite trapezoid weights."""
    alpha = check_alpha(alpha, allow_one=True)
    N = grid.n_steps
    p = alpha + 1.0
    c = grid.h**alpha / (alpha * p)
    d2 = np.zeros(N + 1)
    if N >= 2:
        d2[1:] = _second_difference(np.arange(1, N + 1), p)
    w = np.zeros((N + 1, N + 1))
    idx = np.arange(N + 1)
    lag = idx[:, None] - idx[None, :]
    interior = (lag > 0) & (idx[None, :] > 0)
    w[interior] = d2[lag[interior]]
    w[1:, 0] = _first_column(idx[1:], p)
    w[idx[1:], idx[1:]] = 1.0
    w *= c
    w.setflags(write=False)
    return AbelWeights(alpha, grid, w)


class AbelRows:
    """Row-by-row access to the weights of :func:`abel_weights` in O(N) memory.

    The table is Toeplitz apart from its first column and diagonal, so only
    the ``N + 1`` second differences and first-column entries are stored.
    """

    def __init__(self, alpha: float, grid: TimeGrid):
        self.alpha = check_alpha(alpha, allow_one=True)
        self.grid = grid
        N = grid.n_steps
        p = self.alpha + 1.0
        self._c = grid.h**self.alpha / (self.alpha * p)
        self._d2 = np.zeros(N + 1)
        if N >= 2:
            self._d2[1:] = _second_difference(np.arange(1, N + 1), p)
        self._first = np.zeros(N + 1)
        self._first[1:] = _first_column(np.arange(1, N + 1), p)

    def row(self, n: int, explicit: bool = False) -> np.ndarray:
        """Weights of nodes ``0..n`` for the integral up to ``t_n``.

        With ``explicit`` the diagonal weight is folded onto node ``n - 1`` and the
        returned row has length ``n`` (history nodes only).
        """
        if n == 0:
            return np.zeros(0 if explicit else 1)
        r = np.empty(n + 1)
        r[0] = self._first[n]
        r[1:n] = self._d2[n - 1 : 0 : -1]
        r[n] = 1.0
        r *= self._c
        if explicit:
            r[n - 1] += r[n]
            return r[:n]
        return r


def frac_integral(phi: SampledFn, w: AbelWeights) -> SampledFn:
    """Abel integral ``int_0^t (t - s)**(alpha-1) phi(s) ds`` at every node (no leading alpha)."""
    same_grid(phi.grid, w.grid)
    return SampledFn(phi.grid, w.w @ phi.values)


def regular_integral(phi: SampledFn) -> SampledFn:
    """Cumulative trapezoid ``int_0^t phi(s) ds``."""
    v = phi.values
    h = phi.grid.h
    out = np.zeros_like(v)
    out[1:] = np.cumsum(0.5 * h * (v[1:] + v[:-1]))
    return SampledFn(phi.grid, out)


def _pl_decomposition(phi: SampledFn) -> tuple[float, np.ndarray, np.ndarray]:
    """Write the linear interpolant as ``phi0 + sum_j c_j (s - s_j)_+``.

    Returns ``(phi0, s_j, c_j)``; kinks whose slope change is at rounding level
    are dropped.
    """
    v = phi.values
    t = phi.grid.nodes
    slopes = np.diff(v) / phi.grid.h
    coef = np.empty_like(slopes)
    coef[0] = slopes[0]
    coef[1:] = np.diff(slopes)
    noise = 64 * np.finfo(float).eps * max(float(np.max(np.abs(v))), 1e-300) / phi.grid.h
    keep = np.abs(coef) > noise
    keep[0] = coef[0] != 0.0
    return float(v[0]), t[:-1][keep], coef[keep]


def rl_integral(phi: SampledFn, beta, log_scale=None) -> np.ndarray:
    """Riemann-Liouville integral of the linear interpolant of ``phi``.

    Computes ``scale * (1/Gamma(beta)) int_0^t (t - s)**(beta-1) phi(s) ds`` at
    every node, in closed form, for each order in ``beta`` (all > 0).  The
    optional ``log_scale`` (broadcastable to ``(len(beta), n_nodes)``) is added
    in log space before exponentiation so huge prefactors times tiny kernel
    moments never overflow.

    Returns an array of shape ``(len(beta), n_nodes)``.
    """
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    if np.any(beta <= 0):
        raise DomainError("Riemann-Liouville order must be > 0")
    t = phi.grid.nodes
    n_nodes = t.size
    ls = np.zeros((beta.size, n_nodes)) if log_scale is None else np.broadcast_to(
        log_scale, (beta.size, n_nodes)
    )
    phi0, s_k, c_k = _pl_decomposition(phi)
    b = beta[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        logt = np.log(t)[None, :]
        out = np.zeros((beta.size, n_nodes))
        if phi0 != 0.0:
            out += phi0 * np.exp(ls + b * logt - gammaln(b + 1.0))
        lg2 = gammaln(b + 2.0)
        for sk, ck in zip(s_k, c_k):
            d = t - sk
            pos = d > 0
            if not np.any(pos):
                continue
            logd = np.full(n_nodes, -np.inf)
            logd[pos] = np.log(d[pos])
            out += ck * np.exp(ls + (b + 1.0) * logd[None, :] - lg2)
    out[:, 0] = 0.0
    return out


def solve_volterra(
    a: SampledFn,
    b: SampledFn,
    g: SampledFn,
    alpha: float,
    w: AbelWeights | None = None,
) -> SampledFn:
    """Solve ``u = a + b * int_0^t u + g * int_0^t (t-s)**(alpha-1) u`` on the grid.

    Time-marching with trapezoid weights for the regular integral and product
    trapezoid weights for the Abel integral; the current node is treated
    implicitly through the diagonal weights.

    Raises
    ------
    SingularStepError
        If ``1 - b_n h/2 - g_n w[n, n] <= 0`` at some node ``n``.
    """
    grid = same_grid(a.grid, b.grid, g.grid)
    alpha = check_alpha(alpha, allow_one=True)
    if w is None:
        w = abel_weights(alpha, grid)
    elif w.grid != grid or w.alpha != alpha:
        raise GridMismatchError("Abel weights were built for a different grid or order")
    for name, f in (("a", a), ("b", b), ("g", g)):
        if not f.is_nonnegative():
            raise HypothesisError(f"{name}(t) must be nonnegative on the grid")
    for name, f in (("b", b), ("g", g)):
        if not f.is_nondecreasing():
            raise HypothesisError(f"{name}(t) must be nondecreasing on the grid")

    av, bv, gv = a.values, b.values, g.values
    h = grid.h
    W = w.w
    u = np.zeros(len(grid))
    u[0] = av[0]
    trap_hist = -0.5 * h * u[0]  # becomes h/2 u_0 + h (u_1 + ... + u_{n-1})
    for n in range(1, len(grid)):
        trap_hist += h * u[n - 1]
        diag = 1.0 - bv[n] * 0.5 * h - gv[n] * W[n, n]
        if diag <= 0.0:
            raise SingularStepError(
                f"implicit diagonal coefficient {diag:.3e} <= 0 at node {n} (t={grid.nodes[n]:.6g}); "
                "refine the grid or reduce b, g",
                node=n,
            )
        rhs = av[n] + bv[n] * trap_hist + gv[n] * float(W[n, :n] @ u[:n])
        u[n] = rhs / diag
        if not math.isfinite(u[n]):
            raise SingularStepError(f"non-finite Volterra solution at node {n}", node=n)
    return SampledFn(grid, u)
