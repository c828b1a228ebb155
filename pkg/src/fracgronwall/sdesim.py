"""Seeded simulation of the scalar fractional SDE in integral form.

The state obeys

.. math::

    x(t) = x_0 + \\int_0^t b(x)\\,ds + \\alpha \\int_0^t (t-s)^{\\alpha-1} \\sigma_1(x)\\,ds
           + \\int_0^t \\sigma_2(x)\\,dB_s .

Two discretizations share one set of product-trapezoid Abel weights:

* :func:`simulate_path` marches explicitly.  The drift uses left-point sums,
  the Abel channel uses :meth:`AbelWeights.explicit` (history nodes only, kernel
  anchored at the new node), and the noise uses Ito left-point sums.
* :func:`picard_solve_path` iterates the full discrete map on a frozen noise
  stream.  The drift is trapezoidal and the Abel channel includes the diagonal
  weight, so in the deterministic case the fixed point is exactly the
  :func:`~fracgronwall.singquad.solve_volterra` solution.

Noise for path ``j`` of an ensemble comes from a Philox generator keyed by
``SeedSequence(base_seed, spawn_key=(j,))``.  Paths never share streams, and
any single path can be regenerated without the rest of the ensemble.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError, DomainError, GridMismatchError, PathBlowUpError
from .families import Family, parse_family
from .grids import SampledFn, TimeGrid, check_alpha
from .singquad import AbelWeights

__all__ = [
    "CoeffSpec",
    "NoiseStream",
    "PathEnsemble",
    "MomentStats",
    "PicardResult",
    "brownian_path",
    "ensemble_noise",
    "simulate_path",
    "simulate_ensemble",
    "picard_solve_path",
    "mc_ensemble_stats",
    "uniqueness_probe",
    "gap_decay_rates",
    "SCHEME_VERSION",
]

SCHEME_VERSION = "explicit-abel-v1"
_SEED_MAX = 2**64 - 1
_CHUNK = 2048  # paths per vectorized block; fixed so results never depend on workers


# --------------------------------------------------------------------------
# coefficients
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class CoeffSpec:
    """Drift ``b``, Abel-channel ``sigma1`` and diffusion ``sigma2`` of the SDE.

    The coefficients are autonomous families from the closed registry in
    :mod:`fracgronwall.families`.  ``lipschitz_L`` and ``growth_K`` default to
    the values implied by the families:

    * ``L = L_b + L_sigma1 + L_sigma2``;
    * ``K**2 = K2_b + K2_sigma1 + K2_sigma2``, where ``f**2 <= K2 (1 + x**2)``.

    Declared values smaller than those are rejected.
    """

    b: Family = field(default_factory=lambda: Family("zero"))
    sigma1: Family = field(default_factory=lambda: Family("zero"))
    sigma2: Family = field(default_factory=lambda: Family("zero"))
    lipschitz_L: float | None = None
    growth_K: float | None = None

    def __post_init__(self) -> None:
        for name in ("b", "sigma1", "sigma2"):
            object.__setattr__(self, name, parse_family(getattr(self, name)))
        L_min = self.b.lipschitz + self.sigma1.lipschitz + self.sigma2.lipschitz
        K_min = math.sqrt(self.b.growth_sq + self.sigma1.growth_sq + self.sigma2.growth_sq)
        L = L_min if self.lipschitz_L is None else float(self.lipschitz_L)
        K = K_min if self.growth_K is None else float(self.growth_K)
        if not (math.isfinite(L) and math.isfinite(K)) or L < 0 or K < 0:
            raise DomainError("Lipschitz and growth constants must be finite and >= 0")
        # Relative slack so a round-tripped repr of the same constant is accepted.
        if L < L_min * (1 - 1e-12) or K < K_min * (1 - 1e-12):
            raise DomainError(
                f"declared constants (L={L}, K={K}) are smaller than the family bounds "
                f"(L>={L_min}, K>={K_min})"
            )
        object.__setattr__(self, "lipschitz_L", L)
        object.__setattr__(self, "growth_K", K)

    @classmethod
    def parse(cls, b: str = "zero", sigma1: str = "zero", sigma2: str = "zero") -> CoeffSpec:
        return cls(parse_family(b), parse_family(sigma1), parse_family(sigma2))

    def check_constants(self, x_range: tuple[float, float] = (-50.0, 50.0), n: int = 2001) -> bool:
        """Sample derivative and growth bounds on ``x_range``; True if the declared constants hold."""
        x = np.linspace(*x_range, n)
        slope = sum(np.abs(f.deriv(x)) for f in (self.b, self.sigma1, self.sigma2))
        growth = sum(f(x) ** 2 for f in (self.b, self.sigma1, self.sigma2))
        ok_L = bool(np.all(slope <= self.lipschitz_L * (1 + 1e-12) + 1e-15))
        ok_K = bool(np.all(growth <= self.growth_K**2 * (1 + x**2) * (1 + 1e-12) + 1e-15))
        return ok_L and ok_K

    @property
    def is_zero(self) -> bool:
        return self.b.is_zero and self.sigma1.is_zero and self.sigma2.is_zero

    def to_dict(self) -> dict:
        return {
            "b": self.b.spec(),
            "sigma1": self.sigma1.spec(),
            "sigma2": self.sigma2.spec(),
            "lipschitz_L": self.lipschitz_L,
            "growth_K": self.growth_K,
        }


# --------------------------------------------------------------------------
# noise
# --------------------------------------------------------------------------


def _check_seed(seed: int) -> int:
    if int(seed) != seed or not (0 <= seed <= _SEED_MAX):
        raise DomainError(f"seed must be an unsigned 64-bit integer, got {seed!r}")
    return int(seed)


def _generator(seed: int, key: tuple[int, ...] = ()) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=key)))


@dataclass(frozen=True)
class NoiseStream:
    """Brownian increments ``dB_j ~ N(0, h)`` on a time grid."""

    seed: int
    grid: TimeGrid
    increments: np.ndarray
    path_index: int | None = None

    def __post_init__(self) -> None:
        inc = np.array(self.increments, dtype=float)
        if inc.shape != (self.grid.n_steps,):
            raise GridMismatchError(f"expected {self.grid.n_steps} increments, got shape {inc.shape}")
        inc.setflags(write=False)
        object.__setattr__(self, "increments", inc)

    def path(self) -> SampledFn:
        """The Brownian path ``B(t_j)`` with ``B(0) = 0``."""
        return SampledFn(self.grid, np.concatenate(([0.0], np.cumsum(self.increments))))

    def sanity(self, n_se: float = 5.0) -> tuple[bool, float, float]:
        """Check mean and variance of the increments against ``(0, h)``.

        Returns ``(ok, z_mean, z_var)`` with the z-scores in standard errors.
        Only meaningful for long streams; never raises.
        """
        n = self.increments.size
        h = self.grid.h
        z_mean = float(np.mean(self.increments) / math.sqrt(h / n))
        # Var of the sample variance of a Gaussian is 2 h^2 / (n - 1).
        z_var = float((np.var(self.increments, ddof=1) - h) / (h * math.sqrt(2.0 / max(n - 1, 1))))
        return abs(z_mean) <= n_se and abs(z_var) <= n_se, z_mean, z_var


def brownian_path(seed: int, grid: TimeGrid, path_index: int | None = None) -> NoiseStream:
    """Deterministic Brownian increments for ``(seed, grid)``.

    With ``path_index`` the stream is the one used for that path of an
    ensemble seeded with ``seed``.  Streams with a long grid (``>= 10**4``
    steps) are sanity-checked, and a failure only produces a warning.
    """
    seed = _check_seed(seed)
    key = () if path_index is None else (int(path_index),)
    inc = _generator(seed, key).standard_normal(grid.n_steps) * math.sqrt(grid.h)
    noise = NoiseStream(seed, grid, inc, path_index)
    if grid.n_steps >= 10_000:
        ok, zm, zv = noise.sanity()
        if not ok:
            warnings.warn(f"noise stream seed={seed} failed sanity check (z_mean={zm:.2f}, z_var={zv:.2f})")
    return noise


def ensemble_noise(base_seed: int, j: int, grid: TimeGrid) -> NoiseStream:
    """Noise of path ``j`` in an ensemble seeded with ``base_seed``."""
    return brownian_path(base_seed, grid, path_index=j)


def _initial_values(base_seed: int, idx: np.ndarray, x0: float, x0_std: float) -> np.ndarray:
    if x0_std == 0.0:
        return np.full(idx.size, float(x0))
    # Separate child key so the Brownian stream of a path does not depend on x0_std.
    z = np.array([_generator(base_seed, (int(j), 1)).standard_normal() for j in idx])
    return x0 + x0_std * z


# --------------------------------------------------------------------------
# direct explicit scheme
# --------------------------------------------------------------------------


def _check_weights(grid: TimeGrid, alpha: float, w: AbelWeights) -> None:
    if w.grid != grid:
        raise GridMismatchError("noise grid and Abel weight grid differ")
    if w.alpha != alpha:
        raise GridMismatchError(f"Abel weights built for alpha={w.alpha}, not {alpha}")


def _march(c: CoeffSpec, x0: np.ndarray, dB: np.ndarray, alpha: float, w: AbelWeights) -> np.ndarray:
    """Explicit scheme for a block of paths; ``dB`` has shape ``(P, N)``."""
    P, N = dB.shape
    h = w.grid.h
    X = np.empty((P, N + 1))
    X[:, 0] = x0
    sig1_const = c.sigma1.state_independent
    if sig1_const:
        # The Abel channel is then deterministic and can be summed once.
        s1 = c.sigma1(np.zeros(1))[0]
        abel_det = alpha * s1 * (w.explicit() @ np.ones(N + 1))
    else:
        We = w.explicit()
        S1 = np.empty((P, N + 1))
    drift = np.zeros(P)
    noise = np.zeros(P)
    # Overflow is caught below as a blow-up, so numpy need not warn about it.
    with np.errstate(over="ignore", invalid="ignore"):
        for n in range(N):
            xn = X[:, n]
            drift += h * c.b(xn)
            noise += c.sigma2(xn) * dB[:, n]
            if sig1_const:
                abel = abel_det[n + 1]
            else:
                S1[:, n] = c.sigma1(xn)
                # Row-wise reduction (not BLAS) so that a path is bitwise identical
                # whether it is marched alone or inside a block.
                abel = alpha * (S1[:, : n + 1] * We[n + 1, : n + 1]).sum(axis=1)
            X[:, n + 1] = x0 + drift + abel + noise
            if not np.all(np.isfinite(X[:, n + 1])):
                raise PathBlowUpError(f"non-finite state at node {n + 1} (t={w.grid.nodes[n + 1]:.6g})", node=n + 1)
    return X


def simulate_path(c: CoeffSpec, x0: float, noise: NoiseStream, alpha: float, w: AbelWeights) -> SampledFn:
    """One path of the explicit history-dependent scheme.

    ``x_{n+1} = x0 + h sum_{j<=n} b(x_j) + alpha sum_{j<=n} W[n+1, j] sigma1(x_j)
    + sum_{j<=n} sigma2(x_j) dB_j`` with ``W`` the explicit Abel weights.  With
    ``sigma1 = 0`` this is exactly Euler-Maruyama.

    Raises
    ------
    PathBlowUpError
        If the state becomes non-finite; ``err.node`` is the node index.
    """
    alpha = check_alpha(alpha)
    _check_weights(noise.grid, alpha, w)
    X = _march(c, np.array([float(x0)]), noise.increments[None, :], alpha, w)
    return SampledFn(noise.grid, X[0])


@dataclass(frozen=True)
class PathEnsemble:
    """Seeded collection of paths on one grid.

    ``values[j]`` is path ``j``.  It is reproducible from ``(base_seed, j)`` via
    :func:`ensemble_noise` and :func:`simulate_path`.
    """

    grid: TimeGrid
    base_seed: int
    x0: float
    values: np.ndarray
    x0_std: float = 0.0
    alpha: float | None = None
    coeffs: CoeffSpec | None = None

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] != len(self.grid):
            raise GridMismatchError(f"ensemble values must have shape (n_paths, {len(self.grid)}), got {v.shape}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n_paths(self) -> int:
        return self.values.shape[0]

    @property
    def paths(self) -> list[SampledFn]:
        return [SampledFn(self.grid, row) for row in self.values]

    def path(self, j: int) -> SampledFn:
        return SampledFn(self.grid, self.values[j])


def simulate_ensemble(
    c: CoeffSpec,
    x0: float,
    grid: TimeGrid,
    alpha: float,
    w: AbelWeights,
    n_paths: int,
    base_seed: int,
    *,
    x0_std: float = 0.0,
    workers: int = 1,
) -> PathEnsemble:
    """Simulate ``n_paths`` independent paths, vectorized in fixed-size blocks.

    Blocks are independent, so ``workers > 1`` runs them on a thread pool.  Block
    boundaries and per-path seeds do not depend on ``workers``, which makes the
    output bitwise identical for any worker count.
    """
    alpha = check_alpha(alpha)
    _check_weights(grid, alpha, w)
    base_seed = _check_seed(base_seed)
    if int(n_paths) != n_paths or n_paths < 1:
        raise DomainError("n_paths must be a positive integer")
    if not (math.isfinite(x0_std) and x0_std >= 0):
        raise DomainError("x0_std must be finite and >= 0")
    out = np.empty((n_paths, len(grid)))
    sq = math.sqrt(grid.h)

    def block(start: int) -> None:
        idx = np.arange(start, min(start + _CHUNK, n_paths))
        dB = np.empty((idx.size, grid.n_steps))
        for r, j in enumerate(idx):
            dB[r] = _generator(base_seed, (int(j),)).standard_normal(grid.n_steps) * sq
        out[idx] = _march(c, _initial_values(base_seed, idx, x0, x0_std), dB, alpha, w)

    starts = range(0, n_paths, _CHUNK)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(block, starts))
    else:
        for s in starts:
            block(s)
    return PathEnsemble(grid, base_seed, float(x0), out, float(x0_std), alpha, c)


# --------------------------------------------------------------------------
# Picard iteration
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class PicardResult:
    path: SampledFn
    gaps: np.ndarray
    converged: bool

    @property
    def iterations(self) -> int:
        return int(self.gaps.size)

    def __iter__(self):
        # Allows ``path, gaps = picard_solve_path(...)``.
        yield self.path
        yield self.gaps


def _picard_map(c: CoeffSpec, x0: float, x: np.ndarray, dB: np.ndarray, alpha: float, W: np.ndarray, h: float) -> np.ndarray:
    fb = c.b(x)
    drift = np.zeros_like(x)
    drift[1:] = np.cumsum(0.5 * h * (fb[1:] + fb[:-1]))
    abel = alpha * (W @ c.sigma1(x))
    ito = np.zeros_like(x)
    ito[1:] = np.cumsum(c.sigma2(x[:-1]) * dB)
    return x0 + drift + abel + ito


def picard_solve_path(
    c: CoeffSpec,
    x0: float,
    noise: NoiseStream,
    alpha: float,
    w: AbelWeights,
    tol: float = 1e-8,
    k_max: int = 50,
    *,
    start: np.ndarray | float | None = None,
    raise_on_failure: bool = False,
) -> PicardResult:
    """Successive approximations of the discrete integral map on frozen noise.

    Starting from ``x^0 = start`` (default the constant ``x0``), each iterate
    applies trapezoid drift, full-weight Abel sums and Ito left-point sums to the
    previous one.  Iteration stops once ``max_n |x^{k+1} - x^k| < tol`` or after
    ``k_max`` iterations.  ``gaps[k-1]`` is the sup-norm gap of step ``k``.

    Non-convergence returns ``converged=False`` with the gaps for post-mortem.
    It raises :class:`ConvergenceError` instead if ``raise_on_failure`` is set.
    """
    alpha = check_alpha(alpha)
    _check_weights(noise.grid, alpha, w)
    if not (tol > 0 and math.isfinite(tol)):
        raise DomainError("tol must be finite and > 0")
    if int(k_max) != k_max or k_max < 1:
        raise DomainError("k_max must be an integer >= 1")
    grid = noise.grid
    x = np.full(len(grid), float(x0)) if start is None else np.broadcast_to(np.asarray(start, dtype=float), (len(grid),)).copy()
    gaps = []
    converged = False
    for k in range(1, k_max + 1):
        nxt = _picard_map(c, float(x0), x, noise.increments, alpha, w.w, grid.h)
        if not np.all(np.isfinite(nxt)):
            bad = int(np.argmax(~np.isfinite(nxt)))
            raise PathBlowUpError(f"non-finite Picard iterate {k} at node {bad}", node=bad)
        gaps.append(float(np.max(np.abs(nxt - x))))
        x = nxt
        if gaps[-1] < tol:
            converged = True
            break
    result = PicardResult(SampledFn(grid, x), np.array(gaps), converged)
    if raise_on_failure and not converged:
        raise ConvergenceError(f"Picard iteration did not reach tol={tol} in {k_max} iterations (last gap {gaps[-1]:.3e})")
    return result


def gap_decay_rates(gaps) -> tuple[float, float]:
    """Mean log-decay rates of a Picard gap sequence before and after its midpoint.

    Only the part past the ridge (largest gap) is used.  It is split into two
    halves, and the mean of ``log(gap_{k+1} / gap_k)`` is returned for each.
    Superlinear (faster than geometric) decay shows up as a late rate more
    negative than the early one.  Returns ``(nan, nan)`` for fewer than four
    usable gaps.
    """
    g = np.asarray(gaps, dtype=float)
    g = g[g > 0]
    if g.size == 0:
        return math.nan, math.nan
    lg = np.log(g[int(np.argmax(g)) :])
    if lg.size < 4:
        return math.nan, math.nan
    half = (lg.size - 1) // 2
    early = (lg[half] - lg[0]) / half
    late = (lg[-1] - lg[half]) / (lg.size - 1 - half)
    return float(early), float(late)


def uniqueness_probe(
    c: CoeffSpec,
    x0: float,
    noise: NoiseStream,
    alpha: float,
    w: AbelWeights,
    starts,
    tol: float = 1e-8,
    k_max: int = 50,
) -> float:
    """Max pairwise sup-distance between Picard limits from different initial iterates.

    ``starts`` holds initial iterate functions: scalars or arrays on the grid.
    All runs use the same noise stream.

    Raises
    ------
    ConvergenceError
        If any run fails to converge.
    """
    limits = [
        picard_solve_path(c, x0, noise, alpha, w, tol, k_max, start=s, raise_on_failure=True).path.values
        for s in starts
    ]
    worst = 0.0
    for i in range(len(limits)):
        for j in range(i + 1, len(limits)):
            worst = max(worst, float(np.max(np.abs(limits[i] - limits[j]))))
    return worst


# --------------------------------------------------------------------------
# ensemble statistics
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class MomentStats:
    """Per-node raw moments ``E[x**m]`` with standard errors.

    ``integrated_m2`` is the trapezoid integral of ``E[x**2]`` over the horizon,
    and ``integrated_m2_se`` is its standard error from per-path integrals.
    """

    grid: TimeGrid
    orders: tuple[int, ...]
    mean: np.ndarray
    se: np.ndarray
    variance: np.ndarray
    integrated_m2: float
    integrated_m2_se: float
    running_sup_m2: np.ndarray

    def moment(self, m: int) -> tuple[np.ndarray, np.ndarray]:
        k = self.orders.index(m)
        return self.mean[k], self.se[k]


def _se(samples: np.ndarray) -> np.ndarray:
    n = samples.shape[0]
    if n < 2:
        return np.zeros(samples.shape[1:])
    return np.std(samples, axis=0, ddof=1) / math.sqrt(n)


def mc_ensemble_stats(e: PathEnsemble, moments=(1, 2)) -> MomentStats:
    """Unbiased per-node moment estimates and standard errors.

    Also reports the path variance per node, the time-integrated second moment
    and ``E[max_{s<=t} x(s)**2]``.  The last is informational only.
    """
    orders = tuple(int(m) for m in moments)
    if any(m < 1 for m in orders):
        raise DomainError("moment orders must be positive integers")
    X = e.values
    mean = np.stack([np.mean(X**m, axis=0) for m in orders]) if orders else np.empty((0, X.shape[1]))
    se = np.stack([_se(X**m) for m in orders]) if orders else np.empty((0, X.shape[1]))
    var = np.var(X, axis=0, ddof=1) if e.n_paths > 1 else np.zeros(X.shape[1])
    sq = X**2
    per_path = np.sum(0.5 * e.grid.h * (sq[:, 1:] + sq[:, :-1]), axis=1)
    running = np.mean(np.maximum.accumulate(sq, axis=1), axis=0)
    return MomentStats(
        e.grid,
        orders,
        mean,
        se,
        var,
        float(np.mean(per_path)),
        float(_se(per_path[:, None])[0]),
        running,
    )
