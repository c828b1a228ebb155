"""Fractional Gronwall-Bellman bounds, fractional SDE simulation and a 1-D FPK solver."""

from __future__ import annotations

__version__ = "0.1.0"

from .errors import (
    ConvergenceError,
    DomainError,
    FracGronwallError,
    GridMismatchError,
    HypothesisError,
    MassDriftError,
    PathBlowUpError,
    SingularStepError,
    StabilityError,
)
from .families import Family, parse_family
from .grids import SampledFn, TimeGrid, check_alpha
from .specialfn import MLParams, gamma_fn, binomial, mittag_leffler, log_mittag_leffler
from .singquad import AbelWeights, abel_weights, frac_integral, solve_volterra
from .gronwall import (
    BoundCurve,
    MixedBoundParams,
    classical_bound,
    fractional_bound,
    mixed_bound_closed,
    mixed_bound_series,
    operator_power_bound,
)
from .sdesim import (
    CoeffSpec,
    NoiseStream,
    PathEnsemble,
    brownian_path,
    mc_ensemble_stats,
    picard_solve_path,
    simulate_ensemble,
    simulate_path,
    uniqueness_probe,
)
from .fpk import DensityField, SpaceGrid, fpk_solve, generator_apply, spatial_operators, weak_moment_check
from .verify import BatteryCase, Verdict, run_inequality_battery, run_reduction_suite
