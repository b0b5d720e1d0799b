"""Command-line entry point: ``qbnn {ipe-scan,run,grid,cost-report}``.

Experiment settings come from an optional JSON config file whose keys are
:class:`~qbnn.harness.ExperimentConfig` field names; every field also has a
kebab-case flag, and flags win over the file. The seed falls back to the
``QBNN_SEED`` environment variable and then to 0.

Exit codes: 0 success, 2 configuration error, 1 runtime failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import cost
from .bnn import MlpArchitecture
from .errors import ConfigError, QbnnError
from .harness import ExperimentConfig, ipe_noise_scan, run_experiment, run_grid, write_noise_scan

log = logging.getLogger("qbnn")

SEED_ENV = "QBNN_SEED"


class _UsageError(Exception):
    """argparse failure, turned into exit code 2 without exiting the process."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _floats(text):
    return [float(v) for v in text.split(",") if v.strip()]


def _ints(text):
    return [int(v) for v in text.split(",") if v.strip()]


def _strings(text):
    return [v.strip() for v in text.split(",") if v.strip()]


def _optional_int(text):
    return None if text.lower() in ("none", "null", "") else int(text)


def _optional_float(text):
    return None if text.lower() in ("none", "null", "") else float(text)


# list-valued fields need a parser; the rest follow their annotation
_LIST_PARSERS = {"hidden": _ints, "x_range": _floats, "centers": json.loads}
_SCALARS = {"int": int, "float": float, "str": str, "int | None": _optional_int,
            "float | None": _optional_float, "str | None": str}


def _add_config_flags(parser, skip=()):
    group = parser.add_argument_group("experiment settings (override the config file)")
    for f in dataclasses.fields(ExperimentConfig):
        if f.name in skip:
            continue
        flag = "--" + f.name.replace("_", "-")
        kind = f.type if isinstance(f.type, str) else getattr(f.type, "__name__", str(f.type))
        if f.name in _LIST_PARSERS:
            group.add_argument(flag, dest=f.name, type=_LIST_PARSERS[f.name], default=None)
        elif kind == "bool":
            group.add_argument(flag, dest=f.name, action=argparse.BooleanOptionalAction, default=None)
        else:
            group.add_argument(flag, dest=f.name, type=_SCALARS.get(kind, str), default=None)


def _load_config_file(path):
    try:
        with open(path, encoding="utf-8") as fh:
            values = json.load(fh)
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"{path} is not valid JSON ({exc.msg}, line {exc.lineno})") from None
    if not isinstance(values, dict):
        raise ConfigError("config", f"{path} must hold a JSON object")
    return values


def _resolve_seed(flag_value, file_values):
    if flag_value is not None:
        return flag_value
    if "seed" in file_values:
        return file_values["seed"]
    env = os.environ.get(SEED_ENV)
    if env is not None and env.strip():
        try:
            return int(env)
        except ValueError:
            raise ConfigError("seed", f"{SEED_ENV}={env!r} is not an integer") from None
    return 0


def build_config(args, skip=()):
    """Merge config file, flags and the seed fallback into an ExperimentConfig."""
    values = _load_config_file(args.config) if args.config else {}
    known = set(ExperimentConfig.field_names())
    for key in values:
        if key not in known:
            raise ConfigError(key, "unknown configuration key")
    for name in known - set(skip) - {"seed"}:
        flag_value = getattr(args, name, None)
        if flag_value is not None:
            values[name] = flag_value
    values["seed"] = _resolve_seed(getattr(args, "seed", None), values)
    if getattr(args, "out", None):
        values["out_dir"] = args.out
    return ExperimentConfig.from_dict(values)


def _cmd_ipe_scan(args):
    if args.grid < 1:
        raise ConfigError("grid", "must be a positive integer")
    if args.draws < 1:
        raise ConfigError("draws", "must be a positive integer")
    if not 1 <= args.qubits <= 24:
        raise ConfigError("qubits", "must lie in [1, 24]")
    if len(args.other) != 2:
        raise ConfigError("other", "must have two components")
    seed = _resolve_seed(args.seed, {})
    out = Path(args.out)
    if out.suffix.lower() != ".csv":
        out = out / "noise_scan.csv"
    x = np.linspace(args.x_min, args.x_max, args.grid)
    rows, exact = ipe_noise_scan(args.qubits, x, args.draws, np.random.default_rng(seed), tuple(args.other))
    path, sidecar = write_noise_scan(rows, exact, out)
    log.info("wrote %s and %s", path, sidecar)
    return 0


def _cmd_run(args):
    cfg = build_config(args)
    if not cfg.out_dir:
        raise ConfigError("out_dir", "an output directory is required (--out)")
    result = run_experiment(cfg)
    log.info("wrote %s", ", ".join(sorted(result.files.values())))
    keys = ("mode", "qubits", "seed", "mean_loglik", "stderr_loglik", "rmse_vs_reference")
    print(json.dumps({k: result.metrics[k] for k in keys}))
    return 0


def _cmd_grid(args):
    cfg = build_config(args, skip=("mode", "qubits"))
    if not cfg.out_dir:
        raise ConfigError("out_dir", "an output directory is required (--out)")
    modes = [m.upper() for m in args.modes]
    for m in modes:
        if m not in ("CICP", "CIQP", "QICP", "QIQP"):
            raise ConfigError("modes", f"unknown mode {m!r}")
    quantum = any(m != "CICP" for m in modes)
    if quantum and not args.qubits:
        raise ConfigError("qubits", "quantum modes in the grid need at least one qubit count")
    qubits = args.qubits or []
    for q in qubits:
        if not 1 <= q <= 24:
            raise ConfigError("qubits", f"{q} is outside [1, 24]")
    seeds = args.seeds if args.seeds is not None else [cfg.seed]
    if args.jobs < 1:
        raise ConfigError("jobs", "must be a positive integer")
    summary = run_grid(cfg, modes, qubits, seeds, args.jobs)
    for out_dir, metrics in summary:
        print(json.dumps({"cell": Path(out_dir).name, "mean_loglik": metrics["mean_loglik"],
                          "rmse_vs_reference": metrics["rmse_vs_reference"]}))
    return 0


def _cmd_cost_report(args):
    if args.layer_sizes:
        arch = MlpArchitecture(tuple(args.layer_sizes))
        omega, p = arch.omega, arch.n_params
    else:
        if args.omega is None or args.p is None:
            raise ConfigError("layer_sizes", "give --layer-sizes or both --omega and --p")
        omega, p = args.omega, args.p
    for key in ("k", "n", "m"):
        if getattr(args, key) < 0:
            raise ConfigError(key, "must be non-negative")
    if args.epsilon is not None and args.epsilon <= 0:
        raise ConfigError("epsilon", "must be positive")
    terms = {"r_a": args.r_a, "r_delta": args.r_delta, "r_w": args.r_w}
    terms["r"] = terms["r_a"] + terms["r_delta"] + terms["r_w"]
    report = cost.runtime_report(omega, p, args.k, args.n, args.m, terms, args.r_e,
                                 epsilon=args.epsilon, qubits=args.qubits)
    text = report.to_json()
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text, encoding="utf-8", newline="\n")
    else:
        sys.stdout.write(text)
    return 0


def build_parser():
    parser = _Parser(prog="qbnn", description="Simulated quantum inner products inside Bayesian neural networks.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    scan = sub.add_parser("ipe-scan", help="noise scan of (x, 1) . other over an x grid")
    scan.add_argument("--qubits", type=int, required=True)
    scan.add_argument("--x-min", type=float, default=-1.0)
    scan.add_argument("--x-max", type=float, default=1.0)
    scan.add_argument("--grid", type=int, default=200, help="number of x values")
    scan.add_argument("--draws", type=int, default=100, help="estimates per x value")
    scan.add_argument("--other", type=_floats, default=[1.0, 0.5], help="second vector, e.g. 1.0,0.5")
    scan.add_argument("--seed", type=int, default=None)
    scan.add_argument("--out", required=True, help="CSV file, or directory for noise_scan.csv")
    scan.set_defaults(func=_cmd_ipe_scan)

    run = sub.add_parser("run", help="one experiment")
    run.add_argument("--config", help="JSON file with ExperimentConfig fields")
    run.add_argument("--out", help="output directory")
    _add_config_flags(run, skip=("out_dir",))
    run.set_defaults(func=_cmd_run)

    grid = sub.add_parser("grid", help="modes x qubits x seeds sweep, one subdirectory per cell")
    grid.add_argument("--config", help="JSON file with ExperimentConfig fields")
    grid.add_argument("--out", help="output directory")
    grid.add_argument("--modes", type=_strings, default=["CICP", "QIQP"])
    grid.add_argument("--qubits", type=_ints, default=None, help="comma-separated qubit counts")
    grid.add_argument("--seeds", type=_ints, default=None, help="comma-separated seeds")
    grid.add_argument("--jobs", type=int, default=1)
    _add_config_flags(grid, skip=("out_dir", "mode", "qubits"))
    grid.set_defaults(func=_cmd_grid)

    rep = sub.add_parser("cost-report", help="evaluate the runtime expressions for given dimensions")
    rep.add_argument("--layer-sizes", type=_ints, help="e.g. 1,5,5,1 (sets omega and p)")
    rep.add_argument("--omega", type=int)
    rep.add_argument("--p", type=int)
    rep.add_argument("--k", type=int, required=True, help="posterior samples")
    rep.add_argument("--n", type=int, required=True, help="training points")
    rep.add_argument("--m", type=int, required=True, help="prediction points")
    rep.add_argument("--r-a", type=float, default=0.0)
    rep.add_argument("--r-delta", type=float, default=0.0)
    rep.add_argument("--r-w", type=float, default=0.0)
    rep.add_argument("--r-e", type=float, default=0.0)
    rep.add_argument("--epsilon", type=float)
    rep.add_argument("--qubits", type=int)
    rep.add_argument("--out", help="JSON file (default: stdout)")
    rep.set_defaults(func=_cmd_cost_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"qbnn: error: {exc}", file=sys.stderr)
        return 2
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"qbnn: configuration error: {exc}", file=sys.stderr)
        return 2
    except (QbnnError, ValueError, ArithmeticError, OSError) as exc:
        print(f"qbnn: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
