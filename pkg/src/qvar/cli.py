"""Command-line interface.

Exit codes: 0 success, 2 configuration / input error, 3 numerical failure.
Every command that writes ``--out`` also writes a run manifest (``<out>.manifest.json``
unless ``--manifest`` is given); ``qvar replay MANIFEST`` re-runs it.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np
from scipy import linalg

from . import __version__
from .calculus import ConvergenceError
from .estimator import estimate_C, estimate_C_aggregated, normalized_asymptotic_variance, plan_aggregation
from .experiments import StudyConfig, aggregation_curve_study, default_s_grid, run_study, variance_curve_study
from .fisher import IncrementFamily, cramer_rao_bound, fisher_information
from .grid2d import SeparableExpModel, estimate_separable, grid_to_csv, ingest_grid, simulate_separable
from .models import drift_from_dict, model_from_dict
from .seqalg import parse_sequence, parse_sequences, validate_clt
from .simulate import (PathSample, SimConfig, SimulationError, matrix_to_csv, path_to_csv,
                       read_path_csv, sample_matrix, simulation_warnings)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
NUMERIC_ERRORS = (ConvergenceError, SimulationError, linalg.LinAlgError, FloatingPointError)

log = logging.getLogger("qvar")


class ConfigError(Exception):
    """Bad arguments or input files."""


def _json_arg(text: str, what: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"--{what} is not valid JSON: {exc}") from None


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=False, allow_nan=False) + "\n"


def _warn(msg: str, warnings: list) -> None:
    warnings.append(msg)
    print(f"warning: {msg}", file=sys.stderr)


# -- commands ------------------------------------------------------------


def cmd_simulate(args, warnings: list) -> None:
    model = model_from_dict(_json_arg(args.model, "model"))
    drift = drift_from_dict(_json_arg(args.drift, "drift")) if args.drift else None
    cfg = SimConfig(model, args.n, delta=args.delta, alpha=args.alpha, drift=drift,
                    seed=args.seed, jitter=args.jitter)
    X = sample_matrix(cfg, args.N)
    for w in simulation_warnings(cfg):
        _warn(w, warnings)
    if args.format == "path":
        if args.N != 1:
            raise ConfigError("--format path needs --N 1")
        _emit(path_to_csv(PathSample(cfg.step, X[0], args.alpha)), args.out)
    else:
        _emit(matrix_to_csv(X, cfg.step, (f"model={args.model} seed={args.seed} N={args.N}",)), args.out)


def _load_path(args) -> PathSample:
    try:
        text = Path(args.path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read path file: {exc}") from None
    return read_path_csv(text, delta=args.delta, row=args.row)


def cmd_estimate(args, warnings: list) -> None:
    path = _load_path(args)
    seqs = parse_sequences(args.sequences)
    mode = "unbiased-nprime" if args.denominator in ("nprime", "unbiased-nprime") else "paper-n"
    for a in seqs:
        ok, msg = validate_clt(a, args.D, args.s)
        if not ok:
            _warn(f"sequence {a.label}: {msg}", warnings)
    if args.aggregate:
        report = estimate_C_aggregated(path, seqs, args.D, args.s, mode, args.level)
    else:
        if len(seqs) != 1:
            raise ConfigError("several sequences given; add --aggregate or pass a single sequence")
        report = estimate_C(path, seqs[0], args.D, args.s, mode, args.level)
    if args.aggregate:
        for w in report.warnings:
            _warn(w, warnings)
    if args.format == "csv":
        _emit(",".join(report.CSV_FIELDS) + "\n" + report.csv_row() + "\n", args.out)
    else:
        _emit(_dump(report.to_dict()), args.out)


def cmd_vtilde(args, warnings: list) -> None:
    a = parse_sequence(args.sequence)
    _emit(repr(normalized_asymptotic_variance(a, args.D, args.s)) + "\n", args.out)


def cmd_aggregate(args, warnings: list) -> None:
    plan = plan_aggregation(parse_sequences(args.sequences), args.D, args.s)
    if plan.dropped:
        _warn(f"R is singular; dropped redundant sequences: {', '.join(plan.dropped)}", warnings)
    _emit(_dump({
        "sequences": [a.label for a in plan.sequences],
        "R": plan.R.tolist(),
        "lambda": plan.weights.tolist(),
        "vtilde_agg": plan.vtilde_agg,
        "dropped": list(plan.dropped),
    }), args.out)


def cmd_fisher(args, warnings: list) -> None:
    fam = IncrementFamily(args.family, args.s, args.n, args.delta or 0.0, args.D)
    _emit(_dump({"I_C": fisher_information(fam, args.C), "CR_bound": cramer_rao_bound(fam, args.C)}),
          args.out)


def cmd_mc_study(args, warnings: list) -> None:
    try:
        raw = json.loads(Path(args.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot load study config: {exc}") from None
    if args.full:
        raw["full"] = True
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.N is not None:
        raw["N"] = args.N
    table = run_study(StudyConfig.from_dict(raw))
    _emit(table.to_csv(), args.out)


def cmd_curve_study(args, warnings: list) -> None:
    grid = default_s_grid(args.s_min, args.s_max, args.s_step)
    if args.sets:
        sets = [[a for a in parse_sequences(part)] for part in args.sets.split("|")]
        table = aggregation_curve_study(sets, args.D, grid)
    else:
        table = variance_curve_study(parse_sequences(args.sequences), args.D, grid)
    _emit(table.to_csv(), args.out)


def cmd_simulate2d(args, warnings: list) -> None:
    model = SeparableExpModel(args.sigma2, args.theta1, args.theta2, args.mu)
    grid = simulate_separable(model, args.nx, args.ny, args.seed, args.step_x, args.step_y)
    _emit(grid_to_csv(grid), args.out)


def cmd_estimate2d(args, warnings: list) -> None:
    try:
        grid = ingest_grid(args.grid, args.step_x, args.step_y)
    except OSError as exc:
        raise ConfigError(f"cannot read grid: {exc}") from None
    est = estimate_separable(grid)
    if est.near_independence:
        _warn("near-independence: correlation length below the grid step", warnings)
    _emit(_dump(est.to_dict()), args.out)


# -- parser --------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qvar", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"qvar {__version__}")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name: str, func, help_: str) -> argparse.ArgumentParser:
        sp = sub.add_parser(name, help=help_, description=help_)
        sp.set_defaults(func=func)
        sp.add_argument("--out", help="output file (default: stdout)")
        sp.add_argument("--manifest", help="manifest path (default: <out>.manifest.json)")
        return sp

    sp = add("simulate", cmd_simulate, "simulate Gaussian paths")
    sp.add_argument("--model", required=True, help='JSON, e.g. {"model":"exp","C":3}')
    sp.add_argument("--n", type=int, required=True)
    g = sp.add_mutually_exclusive_group(required=True)
    g.add_argument("--delta", type=float)
    g.add_argument("--alpha", type=float)
    sp.add_argument("--N", type=int, default=1)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--drift", help='JSON, e.g. {"poly":[0,5]} or {"sine":{"amp":1,"freq":2}}')
    sp.add_argument("--jitter", type=float, default=1e-12)
    sp.add_argument("--format", choices=("matrix", "path"), default="matrix")

    sp = add("estimate", cmd_estimate, "estimate C from one path")
    sp.add_argument("--path", required=True, help="index,t,x CSV or replicate-matrix CSV")
    sp.add_argument("--row", type=int, default=0, help="replicate row of a matrix CSV")
    sp.add_argument("--delta", type=float)
    sp.add_argument("--sequences", "--sequence", dest="sequences", default="elem1")
    sp.add_argument("--D", type=int, default=0)
    sp.add_argument("--s", type=float, required=True)
    sp.add_argument("--aggregate", action="store_true")
    sp.add_argument("--denominator", choices=("paper-n", "nprime", "unbiased-nprime"), default="paper-n")
    sp.add_argument("--level", type=float, default=0.95)
    sp.add_argument("--format", choices=("json", "csv"), default="json")

    sp = add("vtilde", cmd_vtilde, "normalized asymptotic variance")
    sp.add_argument("--sequence", required=True)
    sp.add_argument("--D", type=int, default=0)
    sp.add_argument("--s", type=float, required=True)

    sp = add("aggregate", cmd_aggregate, "asymptotic R matrix and optimal weights")
    sp.add_argument("--sequences", required=True)
    sp.add_argument("--D", type=int, default=0)
    sp.add_argument("--s", type=float, required=True)

    sp = add("fisher", cmd_fisher, "Fisher information and Cramer-Rao bound")
    sp.add_argument("--family", choices=("fbm", "slepian"), default="fbm")
    sp.add_argument("--s", type=float, required=True)
    sp.add_argument("--C", type=float, required=True)
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--delta", type=float, help="grid step (default 1/n)")
    sp.add_argument("--D", type=int, default=0)

    sp = add("mc-study", cmd_mc_study, "Monte Carlo study from a JSON config")
    sp.add_argument("--config", required=True)
    sp.add_argument("--full", action="store_true", help="full-scale replicate count (at least 10000)")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--N", type=int)

    sp = add("curve-study", cmd_curve_study, "vtilde curves over s")
    sp.add_argument("--sequences", default="elem1,seq123,elem2,elem3,daub2,daub3")
    sp.add_argument("--sets", help="'|'-separated sequence sets for aggregation curves")
    sp.add_argument("--D", type=int, default=0)
    sp.add_argument("--s-min", type=float, default=0.1)
    sp.add_argument("--s-max", type=float, default=1.9)
    sp.add_argument("--s-step", type=float, default=0.1)

    sp = add("simulate2d", cmd_simulate2d, "simulate a separable exponential grid")
    sp.add_argument("--sigma2", type=float, default=1.0)
    sp.add_argument("--theta1", type=float, required=True)
    sp.add_argument("--theta2", type=float, required=True)
    sp.add_argument("--mu", type=float, default=0.0)
    sp.add_argument("--nx", type=int, default=16)
    sp.add_argument("--ny", type=int, default=16)
    sp.add_argument("--step-x", type=float, default=1.0 / 15)
    sp.add_argument("--step-y", type=float)
    sp.add_argument("--seed", type=int, default=0)

    sp = add("estimate2d", cmd_estimate2d, "estimate separable exponential parameters")
    sp.add_argument("--grid", required=True)
    sp.add_argument("--step-x", type=float, required=True)
    sp.add_argument("--step-y", type=float, required=True)

    sp = sub.add_parser("replay", help="re-run a command from its manifest")
    sp.add_argument("manifest")
    sp.set_defaults(func=None)
    return p


def _manifest_path(args) -> Path | None:
    if getattr(args, "manifest", None):
        return Path(args.manifest)
    if getattr(args, "out", None):
        return Path(args.out + ".manifest.json")
    return None


def run(argv: list[str]) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "replay":
        try:
            manifest = json.loads(Path(args.manifest).read_text())
            replay_argv = list(manifest["argv"])
        except (OSError, json.JSONDecodeError, KeyError) as exc:
            print(f"error: cannot read manifest: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        return run(replay_argv)
    warnings: list = []
    start = time.perf_counter()
    try:
        args.func(args, warnings)
    except NUMERIC_ERRORS as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, ValueError, KeyError, TypeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    mpath = _manifest_path(args)
    if mpath is not None:
        config = {k: v for k, v in vars(args).items() if k not in ("func",)}
        mpath.write_text(_dump({
            "command": args.command,
            "argv": list(argv),
            "config": config,
            "seed": config.get("seed"),
            "version": __version__,
            "numpy": np.__version__,
            "wall_time_s": time.perf_counter() - start,
            "warnings": warnings,
        }))
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    return run(sys.argv[1:] if argv is None else list(argv))


if __name__ == "__main__":
    sys.exit(main())
