"""Command-line front end.

Usage::

    fracgronwall bound    --kind mixed-closed --alpha 0.5 --a const:1 --b const:1 --g const:1
    fracgronwall simulate --s2 const:1 --paths 10000 --seed 7 --out runs/bm
    fracgronwall picard   --b affine:0,1 --s1 affine:1,-1 --s2 affine:0.2,1 --seed 3
    fracgronwall fpk      --s1 const:1 --s2 const:1 --x0 0.5 --cells 320
    fracgronwall verify   --seed 42 --out runs/verify

Every run writes plot-ready data files (CSV or JSON, ``--format``) and a
``manifest.json`` to ``--out``.  The manifest's ``config`` block holds every
resolved parameter.  Passing the manifest back through ``--config``
regenerates the data files bit for bit.  A config file is a JSON object whose
keys are the long option names of the subcommand, with dashes written as
underscores.  Explicit command-line flags override it.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .errors import FracGronwallError
from .families import parse_family
from .fpk import SpaceGrid, fpk_solve, min_time_steps
from .gronwall import MixedBoundParams, classical_bound, fractional_bound, mixed_bound_closed, mixed_bound_series
from .grids import SampledFn, TimeGrid
from .sdesim import (
    SCHEME_VERSION,
    CoeffSpec,
    brownian_path,
    gap_decay_rates,
    mc_ensemble_stats,
    picard_solve_path,
    simulate_ensemble,
    uniqueness_probe,
)
from .singquad import abel_weights
from .verify import (
    BatteryCase,
    all_passed,
    default_battery,
    run_inequality_battery,
    run_picard_suite,
    run_reduction_suite,
    verdicts_to_jsonl,
)

BOUND_KINDS = ("classical", "fractional", "fractional-closed", "mixed-series", "mixed-closed")
EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_ERROR = 0, 1, 2, 3


@dataclass
class RunConfig:
    """Resolved parameters of one run; serializes losslessly to JSON."""

    command: str
    params: dict
    seed: int = 0
    out: str = "."
    format: str = "csv"
    version: str = field(default=__version__)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, text: str) -> RunConfig:
        return cls(**json.loads(text))


# --------------------------------------------------------------------------
# output helpers
# --------------------------------------------------------------------------


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def _write_table(path: Path, fmt: str, columns: list[str], rows) -> Path:
    """Write ``rows`` (iterable of sequences) as CSV or as a JSON object of columns."""
    rows = [list(r) for r in rows]
    if fmt == "csv":
        path = path.with_suffix(".csv")
        with path.open("w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(columns)
            for r in rows:
                wr.writerow([_fmt(v) for v in r])
    else:
        path = path.with_suffix(".json")
        data = {c: [float(r[i]) if not isinstance(r[i], (int, np.integer)) else int(r[i]) for r in rows] for i, c in enumerate(columns)}
        path.write_text(json.dumps(data, sort_keys=True) + "\n")
    return path


def _write_manifest(out: Path, cfg: RunConfig, files: list[Path], summary: dict) -> Path:
    manifest = {
        "config": asdict(cfg),
        "files": sorted(p.name for p in files),
        "summary": summary,
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, sort_keys=True, indent=2, allow_nan=False) + "\n")
    return path


def _finite(x):
    """Replace non-finite floats by strings so the manifest stays strict JSON."""
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    if isinstance(x, dict):
        return {k: _finite(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_finite(v) for v in x]
    return x


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------


def cmd_bound(cfg: RunConfig) -> tuple[int, list[Path], dict]:
    p = cfg.params
    grid = TimeGrid(p["T"], p["steps"])
    t = grid.nodes

    def sample(spec: str) -> SampledFn:
        return SampledFn(grid, parse_family(spec)(t))

    kind = p["kind"]
    if kind == "classical":
        h, k = sample(p["h"]), sample(p["k"])
        curve = classical_bound(h, k, nondecreasing_h=h.is_nondecreasing())
    else:
        a, g = sample(p["a"]), sample(p["g"])
        cap = p["M_cap"] if p["M_cap"] is not None else max(1.0, float(np.max(g.values)), float(np.max(sample(p["b"]).values)))
        params = MixedBoundParams(p["alpha"], cap, p["series_tol"], p["n_max"])
        if kind == "fractional":
            curve = fractional_bound(a, g, p["alpha"], False, params)
        elif kind == "fractional-closed":
            curve = fractional_bound(a, g, p["alpha"], True, params)
        elif kind == "mixed-series":
            curve = mixed_bound_series(a, sample(p["b"]), g, params)
        else:
            curve = mixed_bound_closed(a, sample(p["b"]), g, p["alpha"])
    out = Path(cfg.out)
    f = _write_table(out / "bound", cfg.format, ["t", "value", "tail"], zip(t, curve.values, curve.tail_bound))
    summary = {
        "kind": kind,
        "max_value": float(np.max(curve.values)),
        "final_value": float(curve.values[-1]),
        "max_tail": float(np.max(curve.tail_bound)),
        "n_terms": int(curve.n_terms),
    }
    return EXIT_OK, [f], summary


def _coeffs(p: dict) -> CoeffSpec:
    return CoeffSpec.parse(p["b"], p["s1"], p["s2"])


def cmd_simulate(cfg: RunConfig) -> tuple[int, list[Path], dict]:
    p = cfg.params
    grid = TimeGrid(p["T"], p["steps"])
    c = _coeffs(p)
    w = abel_weights(p["alpha"], grid)
    ens = simulate_ensemble(c, p["x0"], grid, p["alpha"], w, p["paths"], cfg.seed, x0_std=p["x0_std"])
    orders = tuple(int(m) for m in p["moments"])
    stats = mc_ensemble_stats(ens, orders)
    out = Path(cfg.out)
    cols = ["t"]
    data = [grid.nodes]
    for k, m in enumerate(orders):
        cols += [f"m{m}", f"se{m}"]
        data += [stats.mean[k], stats.se[k]]
    cols.append("variance")
    data.append(stats.variance)
    files = [_write_table(out / "moments", cfg.format, cols, zip(*data))]
    if p["save_paths"]:
        pcols = ["t"] + [f"path{j}" for j in range(ens.n_paths)]
        files.append(_write_table(out / "paths", cfg.format, pcols, zip(grid.nodes, *ens.values)))
    summary = {
        "scheme": SCHEME_VERSION,
        "coeffs": c.to_dict(),
        "n_paths": ens.n_paths,
        "final_moments": {f"m{m}": float(stats.mean[k][-1]) for k, m in enumerate(orders)},
        "final_se": {f"m{m}": float(stats.se[k][-1]) for k, m in enumerate(orders)},
        "integrated_m2": stats.integrated_m2,
        "integrated_m2_se": stats.integrated_m2_se,
    }
    return EXIT_OK, files, summary


def cmd_picard(cfg: RunConfig) -> tuple[int, list[Path], dict]:
    p = cfg.params
    grid = TimeGrid(p["T"], p["steps"])
    c = _coeffs(p)
    w = abel_weights(p["alpha"], grid)
    noise = brownian_path(cfg.seed, grid, path_index=p["path_index"])
    res = picard_solve_path(c, p["x0"], noise, p["alpha"], w, p["tol"], p["k_max"])
    out = Path(cfg.out)
    files = [
        _write_table(out / "picard_path", cfg.format, ["t", "x"], zip(grid.nodes, res.path.values)),
        _write_table(out / "gaps", cfg.format, ["k", "gap"], zip(range(1, res.iterations + 1), res.gaps)),
    ]
    early, late = gap_decay_rates(res.gaps)
    summary = {"converged": res.converged, "iterations": res.iterations, "decay_rates": [early, late]}
    if p["offsets"] and res.converged:
        starts = [p["x0"] + float(o) for o in p["offsets"]]
        summary["uniqueness_distance"] = uniqueness_probe(c, p["x0"], noise, p["alpha"], w, starts, p["tol"], p["k_max"])
    code = EXIT_OK if res.converged else EXIT_FAIL
    return code, files, summary


def cmd_fpk(cfg: RunConfig) -> tuple[int, list[Path], dict]:
    p = cfg.params
    c = _coeffs(p)
    xgrid = SpaceGrid(p["x_min"], p["x_max"], p["cells"])
    steps = p["steps"] or min_time_steps(c, p["T"], xgrid, p["alpha"])
    tgrid = TimeGrid(p["T"], steps)
    fld = fpk_solve(c, p["x0"], p["alpha"], tgrid, xgrid)
    out = Path(cfg.out)
    every = max(1, int(p["every"]))
    ks = list(range(0, len(tgrid), every))
    if ks[-1] != len(tgrid) - 1:
        ks.append(len(tgrid) - 1)
    x = xgrid.centers
    rows = ((tgrid.nodes[k], x[i], fld.P[k, i]) for k in ks for i in range(x.size))
    files = [_write_table(out / "density", cfg.format, ["t", "x", "P"], rows)]
    summary = {
        "steps": steps,
        "mass_drift": fld.mass_drift,
        "min_value": fld.min_value,
        "final_mean": fld.mean(),
        "final_variance": fld.variance(),
    }
    return EXIT_OK, files, summary


def _load_cases(path: str) -> list[BatteryCase]:
    data = json.loads(Path(path).read_text())
    if isinstance(data, dict):
        data = data.get("cases", [])
    return [BatteryCase.from_dict(d) for d in data]


def cmd_verify(cfg: RunConfig) -> tuple[int, list[Path], dict]:
    p = cfg.params
    grid = TimeGrid(p["T"], p["steps"])
    if p["battery"] == "default":
        cases = default_battery(grid)
    elif p["battery"] == "empty":
        cases = []
    else:
        cases = _load_cases(p["battery"])
    verdicts = run_inequality_battery(cases, bound_scale=p["bound_scale"])
    if p["reductions"] and p["battery"] != "empty":
        verdicts += run_reduction_suite(grid)
    if p["picard"] and p["battery"] != "empty":
        verdicts += run_picard_suite(cfg.seed, grid=grid)
    out = Path(cfg.out)
    path = out / "verdicts.jsonl"
    path.write_text(verdicts_to_jsonl(verdicts))
    failed = [v.case_id for v in verdicts if not v.passed]
    summary = {"n_verdicts": len(verdicts), "n_failed": len(failed), "failed": failed}
    return (EXIT_OK if all_passed(verdicts) else EXIT_FAIL), [path], summary


COMMANDS = {"bound": cmd_bound, "simulate": cmd_simulate, "picard": cmd_picard, "fpk": cmd_fpk, "verify": cmd_verify}


# --------------------------------------------------------------------------
# argument parsing
# --------------------------------------------------------------------------


def _seed(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _family(text: str) -> str:
    try:
        return parse_family(text).spec()
    except FracGronwallError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _float_list(text: str) -> list[float]:
    return [float(s) for s in text.split(",") if s.strip()]


def _int_list(text: str) -> list[int]:
    return [int(s) for s in text.split(",") if s.strip()]


def _common(sp: argparse.ArgumentParser, steps: int | None = 1024) -> None:
    sp.add_argument("--config", help="JSON config file (or a previous manifest.json); flags override it")
    sp.add_argument("--seed", type=_seed, default=0, help="unsigned 64-bit base seed (default 0)")
    sp.add_argument("--out", default=".", help="output directory (created if missing)")
    sp.add_argument("--format", choices=("csv", "json"), default="csv", help="data file format (default csv)")
    sp.add_argument("--alpha", type=float, default=0.5, help="fractional order in (0, 1) (default 0.5)")
    sp.add_argument("--T", type=float, default=1.0, help="time horizon (default 1)")
    help_steps = "number of time steps" + (" (0 = smallest stable)" if steps == 0 else f" (default {steps})")
    sp.add_argument("--steps", type=int, default=steps, help=help_steps)


def _sde_flags(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--b", type=_family, default="zero", help="drift family b(x), e.g. affine:0,1")
    sp.add_argument("--s1", type=_family, default="zero", help="Abel-channel family sigma1(x)")
    sp.add_argument("--s2", type=_family, default="zero", help="diffusion family sigma2(x)")
    sp.add_argument("--x0", type=float, default=0.0, help="initial value (default 0)")


def build_parser() -> argparse.ArgumentParser:
    fam = "families: zero | const:c | linear:c | affine:c0,c1 | sin:c"
    parser = argparse.ArgumentParser(prog="fracgronwall", description="Fractional Gronwall bounds, SDE simulation and FPK solver.", epilog=fam)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("bound", help="evaluate a Gronwall-type bound on a grid", epilog=fam)
    _common(sp)
    sp.add_argument("--kind", choices=BOUND_KINDS, default="mixed-closed", help="bound to evaluate")
    sp.add_argument("--a", type=_family, default="const:1", help="forcing profile a(t)")
    sp.add_argument("--b", type=_family, default="zero", help="regular-kernel coefficient b(t)")
    sp.add_argument("--g", type=_family, default="zero", help="Abel-kernel coefficient g(t)")
    sp.add_argument("--h", type=_family, default="const:1", help="classical forcing h(t)")
    sp.add_argument("--k", type=_family, default="zero", help="classical kernel k(t)")
    sp.add_argument("--M-cap", dest="M_cap", type=float, default=None, help="bound on b, g (default max(1, sup b, sup g))")
    sp.add_argument("--series-tol", type=float, default=1e-12, help="relative truncation tolerance (default 1e-12)")
    sp.add_argument("--n-max", type=_positive_int, default=4000, help="series term budget (default 4000)")

    sp = sub.add_parser("simulate", help="simulate a seeded path ensemble", epilog=fam)
    _common(sp)
    _sde_flags(sp)
    sp.add_argument("--x0-std", type=float, default=0.0, help="std of a Gaussian initial value (default 0)")
    sp.add_argument("--paths", type=_positive_int, default=1000, help="number of paths (default 1000)")
    sp.add_argument("--moments", type=_int_list, default=[1, 2], help="comma-separated moment orders (default 1,2)")
    sp.add_argument("--save-paths", action="store_true", help="also write every path")

    sp = sub.add_parser("picard", help="Picard iteration on one frozen noise path", epilog=fam)
    _common(sp)
    _sde_flags(sp)
    sp.add_argument("--path-index", type=int, default=0, help="which ensemble noise stream to use (default 0)")
    sp.add_argument("--tol", type=float, default=1e-8, help="sup-norm stopping gap (default 1e-8)")
    sp.add_argument("--k-max", type=_positive_int, default=50, help="iteration budget (default 50)")
    sp.add_argument("--offsets", type=_float_list, default=[], help="initial-iterate offsets for a uniqueness probe, e.g. 0,5,-5")

    sp = sub.add_parser("fpk", help="solve the fractional Fokker-Planck equation", epilog=fam)
    _common(sp, steps=0)
    _sde_flags(sp)
    sp.add_argument("--x-min", type=float, default=-8.0, help="left wall (default -8)")
    sp.add_argument("--x-max", type=float, default=8.0, help="right wall (default 8)")
    sp.add_argument("--cells", type=int, default=320, help="number of cells, >= 16 (default 320)")
    sp.add_argument("--every", type=_positive_int, default=1, help="write every k-th time slice (default 1)")

    sp = sub.add_parser("verify", help="run the verification battery")
    _common(sp)
    sp.add_argument("--battery", default="default", help="'default', 'empty' or a JSON file of cases")
    sp.add_argument("--bound-scale", type=float, default=1.0, help="test hook: multiply every bound (sabotage check)")
    sp.add_argument("--no-reductions", dest="reductions", action="store_false", help="skip the reduction suite")
    sp.add_argument("--no-picard", dest="picard", action="store_false", help="skip the seeded Picard suite")
    return parser


_COMMON_KEYS = ("seed", "out", "format")


def _resolve(parser: argparse.ArgumentParser, argv: list[str]) -> RunConfig:
    args = parser.parse_args(argv)
    if args.config:
        data = json.loads(Path(args.config).read_text())
        if "config" in data and "command" in data["config"]:  # a manifest
            data = data["config"]
        if "command" in data:
            flat = dict(data.get("params", {}))
            flat.update({k: data[k] for k in _COMMON_KEYS if k in data})
        else:
            flat = data
        sp = parser._subparsers._group_actions[0].choices[args.command]  # noqa: SLF001
        known = {a.dest for a in sp._actions}  # noqa: SLF001
        unknown = sorted(set(flat) - known)
        if unknown:
            parser.error(f"unknown config keys for '{args.command}': {', '.join(unknown)}")
        sp.set_defaults(**flat)
        args = parser.parse_args(argv)
    params = {k: v for k, v in vars(args).items() if k not in _COMMON_KEYS + ("command", "config")}
    return RunConfig(args.command, params, args.seed, args.out, args.format)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    cfg = _resolve(parser, argv)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        code, files, summary = COMMANDS[cfg.command](cfg)
    except FracGronwallError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    summary = _finite(summary)
    _write_manifest(out, cfg, files, summary)
    print(json.dumps({"command": cfg.command, **summary}, sort_keys=True))
    return code


if __name__ == "__main__":
    raise SystemExit(main())
