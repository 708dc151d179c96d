"""Command-line runner.

    leocarto run fim-demo --out out/fim
    leocarto run --config configs/radiomap.yaml --seed 3 --format csv
    leocarto validate --config configs/beamhop.yaml

Exit codes: 0 success, 1 numerical failure, 2 usage or validation error.
Outputs go to ``--out``, else the config's ``output_dir``, else
``$LEOCARTO_OUT/<experiment>``, else ``./out/<experiment>``.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from .artifacts import dumps_csv, dumps_json, to_jsonable, write_bundle
from .config import PARAMS, ConfigError, ExperimentConfig, load_config, validate
from .experiments import run_experiment

EXIT_OK, EXIT_NUMERIC, EXIT_USAGE = 0, 1, 2
NUMERIC_ERRORS = (np.linalg.LinAlgError, FloatingPointError, ArithmeticError, RuntimeError)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="leocarto", description="Spectrum-cartography experiment runner")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)
    run = sub.add_parser("run", help="run one experiment")
    run.add_argument("experiment", nargs="?", help=f"one of {', '.join(PARAMS)}")
    run.add_argument("--config", type=Path)
    run.add_argument("--seed", type=int)
    run.add_argument("--out", type=Path)
    run.add_argument("--format", choices=("json", "csv"), default="json")
    val = sub.add_parser("validate", help="check a config without running it")
    val.add_argument("experiment", nargs="?")
    val.add_argument("--config", type=Path)
    sub.add_parser("list", help="list experiments")
    return ap


def _flatten(obj, prefix=""):
    if isinstance(obj, dict):
        for k in sorted(obj):
            yield from _flatten(obj[k], f"{prefix}{k}.")
    elif isinstance(obj, list):
        for i, v in enumerate(obj):
            yield from _flatten(v, f"{prefix}{i}.")
    else:
        yield prefix[:-1], obj


def metrics_csv(metrics) -> str:
    return dumps_csv(["key", "value"], [(k, "" if v is None else v) for k, v in _flatten(to_jsonable(metrics))])


def _resolve(args) -> ExperimentConfig:
    if args.config is not None:
        cfg = load_config(args.config)
        if args.experiment and args.experiment != cfg.experiment:
            raise ConfigError(f"config is for {cfg.experiment!r}, not {args.experiment!r}")
    elif args.experiment:
        cfg = ExperimentConfig(args.experiment)
    else:
        raise ConfigError("give an experiment name or --config")
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    return cfg


def _out_dir(args, cfg) -> Path:
    if args.out is not None:
        return args.out
    if cfg.output_dir:
        return Path(cfg.output_dir)
    return Path(os.environ.get("LEOCARTO_OUT", "out")) / cfg.experiment


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command == "list":
        print("\n".join(PARAMS))
        return EXIT_OK
    try:
        cfg = _resolve(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    problems = validate(cfg)
    if args.command == "validate":
        for p in problems:
            print(p)
        return EXIT_USAGE if problems else EXIT_OK
    if problems:
        for p in problems:
            print(f"invalid config: {p}", file=sys.stderr)
        return EXIT_USAGE
    try:
        metrics, files = run_experiment(cfg)
    except NUMERIC_ERRORS as exc:
        print(f"numerical failure in {cfg.experiment}: {type(exc).__name__}: {exc}", file=sys.stderr)
        curve = getattr(exc, "loss_curve", None)
        if curve:
            print(f"  last losses: {list(curve[-5:])}", file=sys.stderr)
        return EXIT_NUMERIC
    out = dict(files)
    if args.format == "json":
        out["metrics.json"] = dumps_json(metrics)
    else:
        out["metrics.csv"] = metrics_csv(metrics)
    out["config.json"] = dumps_json(cfg.to_dict())
    out_dir = _out_dir(args, cfg)
    write_bundle(out_dir, out, extra={"experiment": cfg.experiment, "seed": cfg.seed})
    print(f"{cfg.experiment}: wrote {len(out) + 1} files to {out_dir}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
