"""One-dimensional fractional Fokker-Planck-Kolmogorov solver.

The transition density is marched in its integral-in-time form

.. math::

    P(t) - P(0) = \\int_0^t A^* P\\,ds + \\alpha \\int_0^t (t-s)^{\\alpha-1} B^* P\\,ds,

    A^* p = -\\partial_x(b p) + \\tfrac12 \\partial_x^2(\\sigma_2^2 p), \\qquad
    B^* p = -\\partial_x(\\sigma_1 p).

Space uses cell averages with conservative central fluxes and zero-flux walls,
so ``1^T A = 1^T B = 0`` and mass is preserved up to rounding.  Time is a
predictor-corrector pair:

* the predictor uses the last corrected slope for the regular channel and the
  history-only Abel weights for the singular one;
* the corrector adds the trapezoid/diagonal weights evaluated at the predictor.

For ``sigma1 = 0`` one step of this scheme is exactly Heun's method on
``P' = A P``, see :func:`classical_fpk_reference`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.stats import gaussian_kde

from .errors import DomainError, GridMismatchError, MassDriftError, StabilityError
from .grids import TimeGrid, check_alpha
from .sdesim import CoeffSpec, PathEnsemble
from .singquad import AbelRows, abel_weights

__all__ = [
    "SpaceGrid",
    "DensityField",
    "TestFunction",
    "TEST_FUNCTIONS",
    "spatial_operators",
    "fpk_solve",
    "classical_fpk_reference",
    "generator_apply",
    "weak_moment_check",
    "WeakMomentReport",
    "kde_l1_distance",
    "min_time_steps",
    "MASS_TOL",
    "CFL_MAX",
    "ABEL_CFL_MAX",
]

MASS_TOL = 1e-3
CFL_MAX = 0.5
# Explicit Abel channel: max|sigma1| dt**alpha / dx.  Instability sets in near 1
# for central fluxes (measured for alpha in [0.25, 0.9]).
ABEL_CFL_MAX = 0.75
NEG_TOL = 1e-10


@dataclass(frozen=True)
class SpaceGrid:
    """``n_cells`` uniform cells on ``[x_min, x_max]``; values live at cell centers."""

    x_min: float
    x_max: float
    n_cells: int

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x_min) and math.isfinite(self.x_max) and self.x_min < self.x_max):
            raise DomainError(f"need finite x_min < x_max, got [{self.x_min}, {self.x_max}]")
        if int(self.n_cells) != self.n_cells or self.n_cells < 16:
            raise DomainError(f"n_cells must be an integer >= 16, got {self.n_cells!r}")
        object.__setattr__(self, "n_cells", int(self.n_cells))

    @property
    def h(self) -> float:
        return (self.x_max - self.x_min) / self.n_cells

    @property
    def centers(self) -> np.ndarray:
        return self.x_min + (np.arange(self.n_cells) + 0.5) * self.h

    @property
    def faces(self) -> np.ndarray:
        return self.x_min + np.arange(self.n_cells + 1) * self.h

    @classmethod
    def around(cls, center: float, half_width: float, n_cells: int) -> SpaceGrid:
        return cls(center - half_width, center + half_width, n_cells)


@dataclass(frozen=True)
class DensityField:
    """Density values ``P[k, i]`` at time node ``k`` and cell ``i``."""

    tgrid: TimeGrid
    xgrid: SpaceGrid
    P: np.ndarray
    info: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        P = np.asarray(self.P, dtype=float)
        if P.shape != (len(self.tgrid), self.xgrid.n_cells):
            raise GridMismatchError(f"density shape {P.shape} does not match the grids")
        P.setflags(write=False)
        object.__setattr__(self, "P", P)

    @property
    def mass(self) -> np.ndarray:
        return self.P.sum(axis=1) * self.xgrid.h

    @property
    def mass_drift(self) -> float:
        return float(np.max(np.abs(self.mass - 1.0)))

    @property
    def min_value(self) -> float:
        return float(np.min(self.P))

    def clipped(self) -> np.ndarray:
        """Density with undershoots above ``-1e-10`` set to zero (for reporting)."""
        return np.where((self.P < 0) & (self.P >= -NEG_TOL), 0.0, self.P)

    def expect(self, f, k: int = -1) -> float:
        """``int f(x) P(t_k, x) dx`` by the midpoint rule."""
        x = self.xgrid.centers
        return float(np.sum(np.asarray(f(x), dtype=float) * self.P[k]) * self.xgrid.h)

    def mean(self, k: int = -1) -> float:
        return self.expect(lambda x: x, k)

    def variance(self, k: int = -1) -> float:
        m = self.mean(k)
        return self.expect(lambda x: (x - m) ** 2, k)


# --------------------------------------------------------------------------
# spatial operators
# --------------------------------------------------------------------------


def _flux_divergence(n: int, h: float) -> sp.csr_matrix:
    """``D`` with ``(D F)_i = -(F_{i+1/2} - F_{i-1/2}) / h`` for interior faces; walls carry no flux."""
    # F has n-1 interior faces; face k sits between cells k and k+1.
    rows = np.concatenate([np.arange(n - 1), np.arange(1, n)])
    cols = np.concatenate([np.arange(n - 1), np.arange(n - 1)])
    vals = np.concatenate([-np.ones(n - 1), np.ones(n - 1)]) / h
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n - 1))


def spatial_operators(c: CoeffSpec, xgrid: SpaceGrid, t: float = 0.0) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """Conservative stencils ``(A_star, B_star)`` on the cell centers.

    Interior face fluxes are

    * advection ``(f_i p_i + f_{i+1} p_{i+1}) / 2``;
    * diffusion ``-(D_{i+1} p_{i+1} - D_i p_i) / h`` with ``D = sigma2**2 / 2``.

    Walls carry zero flux.  Every column of either matrix sums to zero, so the
    discrete mass ``h * sum(p)`` is invariant.  The registry coefficients are
    autonomous, so ``t`` only documents the evaluation time.
    """
    x = xgrid.centers
    n, h = xgrid.n_cells, xgrid.h
    div = _flux_divergence(n, h)
    # Face-from-cell operators (n-1 faces).
    avg = sp.diags([0.5 * np.ones(n - 1), 0.5 * np.ones(n - 1)], [0, 1], shape=(n - 1, n))
    grad = sp.diags([-np.ones(n - 1), np.ones(n - 1)], [0, 1], shape=(n - 1, n)) / h
    bx = sp.diags(c.b(x))
    s1 = sp.diags(c.sigma1(x))
    dx = sp.diags(0.5 * c.sigma2(x) ** 2)
    A = div @ (avg @ bx - grad @ dx)
    B = div @ (avg @ s1)
    return A.tocsr(), B.tocsr()


# --------------------------------------------------------------------------
# solver
# --------------------------------------------------------------------------


def _mollified_delta(x0: float, xgrid: SpaceGrid) -> np.ndarray:
    x = xgrid.centers
    h = xgrid.h
    p = np.exp(-0.5 * ((x - x0) / h) ** 2)
    total = p.sum() * h
    if total == 0.0:
        raise DomainError(f"x0={x0} lies outside the space grid")
    return p / total


def _courant(c: CoeffSpec, dt: float, alpha: float, xgrid: SpaceGrid) -> tuple[float, float]:
    x = xgrid.centers
    s2 = float(np.max(c.sigma2(x) ** 2))
    s1 = float(np.max(np.abs(c.sigma1(x))))
    return s2 * dt / xgrid.h**2, s1 * dt**alpha / xgrid.h


def _check_cfl(c: CoeffSpec, tgrid: TimeGrid, alpha: float, xgrid: SpaceGrid) -> float:
    diff, abel = _courant(c, tgrid.h, alpha, xgrid)
    if diff > CFL_MAX or abel > ABEL_CFL_MAX:
        need = min_time_steps(c, tgrid.t_end, xgrid, alpha)
        raise StabilityError(
            f"time step too large: sigma2^2 dt/dx^2 = {diff:.3f} (max {CFL_MAX}), "
            f"|sigma1| dt^alpha/dx = {abel:.3f} (max {ABEL_CFL_MAX}); use at least {need} time steps"
        )
    return diff


def min_time_steps(c: CoeffSpec, t_end: float, xgrid: SpaceGrid, alpha: float = 1.0) -> int:
    """Fewest uniform time steps meeting both explicit-step restrictions (at least 1)."""
    x = xgrid.centers
    s2 = float(np.max(c.sigma2(x) ** 2))
    s1 = float(np.max(np.abs(c.sigma1(x))))
    n = max(1, math.ceil(s2 * t_end / (CFL_MAX * xgrid.h**2)))
    if s1 > 0:
        dt_max = (ABEL_CFL_MAX * xgrid.h / s1) ** (1.0 / alpha)
        n = max(n, math.ceil(t_end / dt_max))
    # Guard against the ceiling landing a hair above the limit.
    while any(v > m for v, m in zip(_courant(c, t_end / n, alpha, xgrid), (CFL_MAX, ABEL_CFL_MAX))):
        n += 1
    return n


def fpk_solve(
    c: CoeffSpec,
    x0: float,
    alpha: float,
    tgrid: TimeGrid,
    xgrid: SpaceGrid,
    *,
    mass_tol: float = MASS_TOL,
) -> DensityField:
    """March the integral-form FPK equation from a mollified point mass at ``x0``.

    The initial density is a Gaussian of standard deviation ``h_x`` sampled at
    the cell centers and normalized to unit discrete mass.

    Raises
    ------
    StabilityError
        If ``max sigma2**2 * dt / dx**2 > 1/2`` or ``max |sigma1| dt**alpha / dx > 3/4``.
    MassDriftError
        If ``|mass - 1|`` exceeds ``mass_tol`` at some time node.
    """
    alpha = check_alpha(alpha)
    cfl = _check_cfl(c, tgrid, alpha, xgrid)
    A, B = spatial_operators(c, xgrid)
    rows = AbelRows(alpha, tgrid)
    dt = tgrid.h
    N, M = tgrid.n_steps, xgrid.n_cells
    P = np.empty((N + 1, M))
    P[0] = _mollified_delta(x0, xgrid)
    has_abel = not c.sigma1.is_zero
    BP = np.zeros((N + 1, M))
    regular = np.zeros(M)
    Q_prev = A @ P[0]
    if has_abel:
        BP[0] = B @ P[0]
    for n in range(1, N + 1):
        hist = alpha * (rows.row(n, explicit=True) @ BP[:n]) if has_abel else 0.0
        pred = P[0] + regular + dt * Q_prev + hist
        regular = regular + 0.5 * dt * (Q_prev + A @ pred)
        if has_abel:
            wn = rows.row(n)
            abel = alpha * (wn[:n] @ BP[:n] + wn[n] * (B @ pred))
            P[n] = P[0] + regular + abel
            BP[n] = B @ P[n]
        else:
            P[n] = P[0] + regular
        Q_prev = A @ P[n]
        drift = abs(P[n].sum() * xgrid.h - 1.0)
        if not np.isfinite(drift) or drift > mass_tol:
            raise MassDriftError(
                f"mass drift {drift:.3e} exceeds {mass_tol} at time node {n} (t={tgrid.nodes[n]:.6g})"
            )
    field_ = DensityField(tgrid, xgrid, P)
    field_.info.update({"cfl": cfl, "mass_drift": field_.mass_drift, "min_value": field_.min_value, "x0": float(x0)})
    return field_


def classical_fpk_reference(c: CoeffSpec, x0: float, tgrid: TimeGrid, xgrid: SpaceGrid) -> DensityField:
    """Heun's method for ``P' = A_star P`` with the same stencil and initial density."""
    _check_cfl(c, tgrid, 1.0, xgrid)
    A, _ = spatial_operators(c, xgrid)
    dt = tgrid.h
    P = np.empty((len(tgrid), xgrid.n_cells))
    P[0] = _mollified_delta(x0, xgrid)
    for n in range(1, len(tgrid)):
        k1 = A @ P[n - 1]
        k2 = A @ (P[n - 1] + dt * k1)
        P[n] = P[n - 1] + 0.5 * dt * (k1 + k2)
    return DensityField(tgrid, xgrid, P)


# --------------------------------------------------------------------------
# generator and weak moments
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class TestFunction:
    """Time-independent test function with closed-form derivatives."""

    __test__ = False  # not a pytest class

    name: str
    f: object
    df: object
    d2f: object

    def __call__(self, x):
        return self.f(np.asarray(x, dtype=float))


TEST_FUNCTIONS = {
    "x": TestFunction("x", lambda x: x, lambda x: np.ones_like(x), lambda x: np.zeros_like(x)),
    "x2": TestFunction("x2", lambda x: x**2, lambda x: 2.0 * x, lambda x: np.full_like(x, 2.0)),
    "cos": TestFunction("cos", np.cos, lambda x: -np.sin(x), lambda x: -np.cos(x)),
}


def _test_function(V: str | TestFunction) -> TestFunction:
    if isinstance(V, TestFunction):
        return V
    key = {"x^2": "x2", "x**2": "x2", "cos x": "cos", "cosx": "cos"}.get(V, V)
    if key not in TEST_FUNCTIONS:
        raise DomainError(f"unknown test function {V!r}; known: {', '.join(TEST_FUNCTIONS)}")
    return TEST_FUNCTIONS[key]


def generator_apply(c: CoeffSpec, V: str | TestFunction, t: float, x):
    """Generator channels ``(L1 V, L2 V, L3 V)`` at ``(t, x)``.

    ``L1 V = V' b + sigma2**2 V'' / 2``, ``L2 V = V' sigma1`` and ``L3 V = V' sigma2``;
    ``V`` has no explicit time dependence.  Vectorized over ``x``.
    """
    V = _test_function(V)
    x = np.asarray(x, dtype=float)
    d1, d2 = V.df(x), V.d2f(x)
    s2 = c.sigma2(x)
    out = (d1 * c.b(x) + 0.5 * s2**2 * d2, d1 * c.sigma1(x), d1 * s2)
    if x.ndim == 0:
        return tuple(float(v) for v in out)
    return out


@dataclass(frozen=True)
class WeakMomentReport:
    """``E[V(x(t))]`` three ways, pairwise discrepancies and their tolerances."""

    V: str
    t: float
    values: dict
    se: dict
    discrepancies: dict
    tolerances: dict

    @property
    def passed(self) -> bool:
        return all(self.discrepancies[k] <= self.tolerances[k] for k in self.discrepancies)

    def to_dict(self) -> dict:
        return {
            "V": self.V,
            "t": self.t,
            "values": self.values,
            "se": self.se,
            "discrepancies": self.discrepancies,
            "tolerances": self.tolerances,
            "passed": self.passed,
        }


def weak_moment_check(
    c: CoeffSpec,
    V: str | TestFunction,
    field: DensityField,
    ensemble: PathEnsemble,
    *,
    n_se: float = 3.0,
    rel_tol: float = 0.02,
) -> WeakMomentReport:
    """Compare ``E[V(x(T))]`` from the density, the ensemble and the generator identity.

    * ``fpk``: ``V(x0) + int V (P_T - P_0) dx``, which removes the mollifier's
      own contribution.
    * ``mc``: the ensemble average of ``V(x(T))``.
    * ``generator``: the per-path average of
      ``V(x0) + int_0^T L1V ds + alpha int_0^T (T-s)**(alpha-1) L2V ds``.  The
      integrals use trapezoid and product-trapezoid weights on the ensemble grid.

    Each pair counts as consistent when ``|d| <= max(n_se * SE, rel_tol * scale)``.
    Here SE combines both standard errors and ``scale`` is the larger magnitude.
    """
    V = _test_function(V)
    if not math.isclose(field.tgrid.t_end, ensemble.grid.t_end, rel_tol=1e-12):
        raise GridMismatchError("density and ensemble horizons differ")
    alpha = ensemble.alpha
    if alpha is None:
        raise DomainError("ensemble does not record its fractional order")
    x0 = field.info.get("x0", float(ensemble.x0))
    fpk = float(V(x0)) + field.expect(V, -1) - field.expect(V, 0)

    XT = ensemble.values[:, -1]
    vt = V(XT)
    n = ensemble.n_paths
    mc = float(np.mean(vt))
    mc_se = float(np.std(vt, ddof=1) / math.sqrt(n)) if n > 1 else 0.0

    X = ensemble.values
    L1, L2, _ = generator_apply(c, V, 0.0, X)
    h = ensemble.grid.h
    w_last = abel_weights(alpha, ensemble.grid).row(ensemble.grid.n_steps)
    per_path = V(X[:, 0]) + np.sum(0.5 * h * (L1[:, 1:] + L1[:, :-1]), axis=1) + alpha * (L2 @ w_last)
    gen = float(np.mean(per_path))
    gen_se = float(np.std(per_path, ddof=1) / math.sqrt(n)) if n > 1 else 0.0

    values = {"fpk": fpk, "mc": mc, "generator": gen}
    se = {"fpk": 0.0, "mc": mc_se, "generator": gen_se}
    disc, tols = {}, {}
    for a, b in (("fpk", "mc"), ("fpk", "generator"), ("mc", "generator")):
        key = f"{a}-{b}"
        disc[key] = abs(values[a] - values[b])
        comb = math.hypot(se[a], se[b])
        tols[key] = max(n_se * comb, rel_tol * max(abs(values[a]), abs(values[b])), 1e-12)
    return WeakMomentReport(V.name, float(ensemble.grid.t_end), values, se, disc, tols)


def kde_l1_distance(field: DensityField, samples: np.ndarray, k: int = -1) -> float:
    """L1 distance between the density at time node ``k`` and a Gaussian KDE of ``samples``."""
    samples = np.asarray(samples, dtype=float)
    if np.ptp(samples) == 0.0:
        raise DomainError("KDE needs samples with positive spread")
    x = field.xgrid.centers
    kde = gaussian_kde(samples)(x)
    return float(np.sum(np.abs(field.clipped()[k] - kde)) * field.xgrid.h)
