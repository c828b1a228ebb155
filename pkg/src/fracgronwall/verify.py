"""Verification harness: extremal-solution dominance, reductions and Picard checks.

Each check yields a :class:`Check` with a signed worst margin, which is
nonnegative when the check passes.  Checks are grouped per case into a
:class:`Verdict`.  The harness is total: any exception raised by an oracle or
an evaluator becomes a failed check carrying the error text.  Verdicts
serialize to sorted-key JSON lines, so the same inputs give byte-identical
output.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .families import Family, parse_family
from .gronwall import (
    MixedBoundParams,
    classical_bound,
    fractional_bound,
    mixed_bound_closed,
    mixed_bound_series,
)
from .grids import SampledFn, TimeGrid, check_alpha
from .sdesim import CoeffSpec, brownian_path, gap_decay_rates, picard_solve_path, uniqueness_probe
from .singquad import abel_weights, solve_volterra

__all__ = [
    "EPS_ABS",
    "EPS_REL",
    "BatteryCase",
    "Check",
    "Verdict",
    "default_battery",
    "run_inequality_battery",
    "run_reduction_suite",
    "run_picard_suite",
    "PICARD_BATTERY",
    "verdicts_to_jsonl",
    "all_passed",
]

EPS_ABS = 1e-8
EPS_REL = 1e-6

LATTICE_ALPHAS = (0.25, 0.5, 0.75, 0.9)
LATTICE_A = ("const:1", "affine:1,1", "affine:0.5,2")
LATTICE_LEVELS = (0.0, 0.25, 0.5)


@dataclass(frozen=True)
class BatteryCase:
    """One instance of the mixed inequality: order, time profiles and grid."""

    case_id: str
    alpha: float
    a_spec: Family
    b_spec: Family
    g_spec: Family
    grid: TimeGrid = field(default_factory=lambda: TimeGrid(1.0, 1024))
    eps_abs: float = EPS_ABS
    eps_rel: float = EPS_REL

    def __post_init__(self) -> None:
        check_alpha(self.alpha)
        for name in ("a_spec", "b_spec", "g_spec"):
            object.__setattr__(self, name, parse_family(getattr(self, name)))

    def profiles(self) -> tuple[SampledFn, SampledFn, SampledFn]:
        t = self.grid.nodes
        return tuple(SampledFn(self.grid, f(t)) for f in (self.a_spec, self.b_spec, self.g_spec))

    def hypothesis_violations(self) -> list[str]:
        """Hypotheses of the dominance bound that fail on the grid (empty if none)."""
        a, b, g = self.profiles()
        out = []
        if not a.is_nonnegative():
            out.append("a(t) >= 0")
        for name, f in (("b", b), ("g", g)):
            if not f.is_nonnegative():
                out.append(f"{name}(t) >= 0")
            if not f.is_nondecreasing():
                out.append(f"{name}(t) nondecreasing")
        return out

    def to_dict(self) -> dict:
        return {
            "case_id": self.case_id,
            "alpha": self.alpha,
            "a": self.a_spec.spec(),
            "b": self.b_spec.spec(),
            "g": self.g_spec.spec(),
            "T": self.grid.t_end,
            "steps": self.grid.n_steps,
            "eps_abs": self.eps_abs,
            "eps_rel": self.eps_rel,
        }

    @classmethod
    def from_dict(cls, d: dict) -> BatteryCase:
        return cls(
            d["case_id"],
            float(d["alpha"]),
            d["a"],
            d["b"],
            d["g"],
            TimeGrid(float(d.get("T", 1.0)), int(d.get("steps", 1024))),
            float(d.get("eps_abs", EPS_ABS)),
            float(d.get("eps_rel", EPS_REL)),
        )


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    worst_margin: float | None
    t: float | None
    detail: str = ""


@dataclass(frozen=True)
class Verdict:
    case_id: str
    checks: tuple[Check, ...]
    info: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self) -> dict:
        return {
            "case_id": self.case_id,
            "passed": self.passed,
            "checks": [asdict(c) for c in self.checks],
            "info": self.info,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, allow_nan=False)


def verdicts_to_jsonl(verdicts) -> str:
    return "".join(v.to_json() + "\n" for v in verdicts)


def all_passed(verdicts) -> bool:
    return all(v.passed for v in verdicts)


def _failed(name: str, exc: BaseException) -> Check:
    return Check(name, False, None, None, f"{type(exc).__name__}: {exc}")


def _dominance(name: str, u: np.ndarray, bound: np.ndarray, t: np.ndarray, eps_abs: float, eps_rel: float) -> Check:
    margin = bound - u + eps_abs + eps_rel * np.abs(u)
    k = int(np.argmin(margin))
    worst = float(margin[k])
    if not math.isfinite(worst):
        return Check(name, False, None, float(t[k]), "non-finite margin")
    return Check(name, worst >= 0.0, worst, float(t[k]))


# --------------------------------------------------------------------------
# inequality battery
# --------------------------------------------------------------------------


def default_battery(grid: TimeGrid | None = None) -> list[BatteryCase]:
    """The 108-case lattice of orders, ``a`` profiles and constant ``b, g`` levels."""
    grid = grid or TimeGrid(1.0, 1024)
    cases = []
    for alpha in LATTICE_ALPHAS:
        for a in LATTICE_A:
            for b in LATTICE_LEVELS:
                for g in LATTICE_LEVELS:
                    cid = f"mixed/alpha={alpha}/a={a}/b={b}/g={g}"
                    cases.append(BatteryCase(cid, alpha, a, f"const:{b}", f"const:{g}", grid))
    return cases


def _run_case(case: BatteryCase, bound_scale: float) -> Verdict:
    t = case.grid.nodes
    violations = case.hypothesis_violations()
    if violations:
        return Verdict(case.case_id, (Check("hypotheses", False, None, None, "violated: " + "; ".join(violations)),))
    a, b, g = case.profiles()
    checks = [Check("hypotheses", True, 0.0, None)]
    info = {}
    try:
        u = solve_volterra(a, b, g, case.alpha).values
    except Exception as exc:  # noqa: BLE001 - oracle failures become verdicts
        return Verdict(case.case_id, tuple(checks) + (_failed("oracle", exc),))
    cap = max(1.0, float(np.max(b.values)), float(np.max(g.values)))
    try:
        series = mixed_bound_series(a, b, g, MixedBoundParams(case.alpha, cap))
        checks.append(_dominance("series_dominance", u, bound_scale * series.upper, t, case.eps_abs, case.eps_rel))
        info["series_terms"] = series.n_terms
    except Exception as exc:  # noqa: BLE001
        checks.append(_failed("series_dominance", exc))
    if a.is_nondecreasing():
        try:
            closed = mixed_bound_closed(a, b, g, case.alpha)
            checks.append(_dominance("closed_dominance", u, bound_scale * closed.values, t, case.eps_abs, case.eps_rel))
        except Exception as exc:  # noqa: BLE001
            checks.append(_failed("closed_dominance", exc))
    return Verdict(case.case_id, tuple(checks), info)


def run_inequality_battery(cases, bound_scale: float = 1.0) -> list[Verdict]:
    """Check that the extremal solution of ``u = a + B u`` lies below the bounds.

    ``bound_scale`` multiplies every bound before comparison.  It is a sabotage
    hook: a value below one must make dominance fail on nontrivial cases.
    """
    return [_run_case(case, bound_scale) for case in cases]


# --------------------------------------------------------------------------
# reductions
# --------------------------------------------------------------------------


def _rel_gap(x: np.ndarray, y: np.ndarray) -> tuple[float, int]:
    scale = np.maximum(np.abs(x), np.abs(y))
    gap = np.where(scale > 0, np.abs(x - y) / np.where(scale > 0, scale, 1.0), 0.0)
    k = int(np.argmax(gap))
    return float(gap[k]), k


def _reduction_b0(alpha: float, a_spec: str, g_level: float, grid: TimeGrid, tol: float) -> Verdict:
    cid = f"reduction/b=0/alpha={alpha}/a={a_spec}/g={g_level}"
    t = grid.nodes
    a = SampledFn(grid, parse_family(a_spec)(t))
    g = SampledFn.constant(grid, g_level)
    zero = SampledFn.constant(grid, 0.0)
    checks = []
    p = MixedBoundParams(alpha, 1.0)
    try:
        mixed = mixed_bound_series(a, zero, g, p)
        frac = fractional_bound(a, g, alpha, False, p)
        gap, k = _rel_gap(mixed.values, frac.values)
        checks.append(Check("series_vs_fractional", gap <= tol, tol - gap, float(t[k])))
        if parse_family(a_spec).state_independent:
            closed = fractional_bound(a, g, alpha, True, p)
            gap, k = _rel_gap(mixed.values, closed.values)
            checks.append(Check("series_vs_fractional_closed", gap <= tol, tol - gap, float(t[k])))
    except Exception as exc:  # noqa: BLE001
        checks.append(_failed("series_vs_fractional", exc))
    return Verdict(cid, tuple(checks))


def _reduction_g0(a_level: float, b_level: float, grid: TimeGrid, alphas, final_gap: float) -> Verdict:
    cid = f"reduction/g=0/a={a_level}/b={b_level}"
    a = SampledFn.constant(grid, a_level)
    b = SampledFn.constant(grid, b_level)
    zero = SampledFn.constant(grid, 0.0)
    try:
        classical = classical_bound(a, b, True).values
        gaps = []
        for alpha in alphas:
            mixed = mixed_bound_closed(a, b, zero, alpha).values
            gaps.append(_rel_gap(mixed, classical)[0])
        exact = _rel_gap(mixed_bound_closed(a, b, zero, 1.0).values, classical)[0]
    except Exception as exc:  # noqa: BLE001
        return Verdict(cid, (_failed("limit_approach", exc),))
    steps = np.diff(gaps)
    monotone = bool(np.all(steps < 0)) if len(gaps) > 1 else True
    checks = (
        Check("monotone_approach", monotone, float(-np.max(steps)) if steps.size else 0.0, None),
        Check("final_gap", gaps[-1] < final_gap, final_gap - gaps[-1], None),
        Check("alpha_one_exact", exact <= 1e-12, 1e-12 - exact, None),
    )
    return Verdict(cid, checks, {"gaps": [float(x) for x in gaps], "alphas": list(alphas)})


def _reduction_a0(grid: TimeGrid) -> Verdict:
    zero = SampledFn.constant(grid, 0.0)
    b = SampledFn.constant(grid, 0.5)
    checks = []
    for alpha in LATTICE_ALPHAS:
        try:
            s = mixed_bound_series(zero, b, b, MixedBoundParams(alpha, 1.0))
            c = mixed_bound_closed(zero, b, b, alpha)
            u = solve_volterra(zero, b, b, alpha)
            worst = float(max(np.max(s.upper), np.max(c.values), np.max(np.abs(u.values))))
            checks.append(Check(f"all_zero/alpha={alpha}", worst == 0.0, -worst, None))
        except Exception as exc:  # noqa: BLE001
            checks.append(_failed(f"all_zero/alpha={alpha}", exc))
    return Verdict("reduction/a=0", tuple(checks))


def run_reduction_suite(
    grid: TimeGrid | None = None,
    *,
    b0_tol: float = 1e-10,
    limit_alphas=(0.9, 0.99, 0.999),
    final_gap: float = 0.01,
) -> list[Verdict]:
    """Equivalence checks for the degenerate cases of the mixed bound.

    * ``b = 0``: the mixed series equals the fractional series.  For constant
      ``a`` it also equals the Mittag-Leffler closed form.
    * ``g = 0``: the closed form approaches the classical exponential bound
      monotonically as ``alpha`` increases to 1, and is exact at ``alpha = 1``.
    * ``a = 0``: every bound and the extremal solution vanish.
    """
    grid = grid or TimeGrid(1.0, 1024)
    out = []
    for alpha in LATTICE_ALPHAS:
        for a in LATTICE_A:
            for g in LATTICE_LEVELS[1:]:
                out.append(_reduction_b0(alpha, a, g, grid, b0_tol))
    for a_level in (1.0, 2.0):
        for b_level in LATTICE_LEVELS[1:]:
            out.append(_reduction_g0(a_level, b_level, grid, limit_alphas, final_gap))
    out.append(_reduction_a0(grid))
    return out


# --------------------------------------------------------------------------
# Picard battery
# --------------------------------------------------------------------------

# Affine coefficients (b, sigma1, sigma2); the last one is deterministic.
PICARD_BATTERY = (
    ("affine:0.5,-1", "affine:0.2,0.5", "affine:0.3,0.2"),
    ("affine:1,0.5", "affine:-0.5,1", "affine:0.5,0.5"),
    ("affine:0,1", "affine:1,-1", "affine:0.2,1"),
    ("affine:0.2,0.3", "affine:0.5,0.5", "zero"),
)


def run_picard_suite(
    seed: int,
    *,
    alpha: float = 0.5,
    grid: TimeGrid | None = None,
    x0: float = 1.0,
    tol: float = 1e-8,
    k_max: int = 30,
    offsets=(0.0, 5.0, -5.0),
    battery=PICARD_BATTERY,
) -> list[Verdict]:
    """Picard convergence, gap decay and uniqueness on the affine battery.

    The noise of battery case ``i`` is the stream of path ``i`` in an ensemble
    seeded with ``seed``.
    """
    grid = grid or TimeGrid(1.0, 1024)
    w = abel_weights(alpha, grid)
    out = []
    for i, coeffs in enumerate(battery):
        cid = f"picard/alpha={alpha}/b={coeffs[0]}/s1={coeffs[1]}/s2={coeffs[2]}"
        checks = []
        info = {}
        try:
            c = CoeffSpec.parse(*coeffs)
            noise = brownian_path(seed, grid, path_index=i)
            res = picard_solve_path(c, x0, noise, alpha, w, tol, k_max)
            info["iterations"] = res.iterations
            checks.append(Check("converged", res.converged, float(k_max - res.iterations), None))
            early, late = gap_decay_rates(res.gaps)
            ok = math.isfinite(late) and late < early < 0
            info["decay_rates"] = [early, late] if ok else None
            checks.append(Check("superlinear_decay", ok, (early - late) if ok else None, None))
            dist = uniqueness_probe(c, x0, noise, alpha, w, [x0 + o for o in offsets], tol, k_max)
            checks.append(Check("uniqueness", dist < 10 * tol, 10 * tol - dist, None))
        except Exception as exc:  # noqa: BLE001
            checks.append(_failed("picard", exc))
        out.append(Verdict(cid, tuple(checks), info))
    return out
