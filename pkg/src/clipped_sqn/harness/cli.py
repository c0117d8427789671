"""Command line entry point.

Exit codes: 0 success, 1 configuration error, 2 a run diverged, 3 I/O error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from .. import objectives
from ..optimizer import ConfigError as OptimizerConfigError
from .config import DEFAULT_ROSTER, ConfigError, default_config, load_config
from .experiment import replot, run_experiment
from .verify import run_checks

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_IO = 0, 1, 2, 3

log = logging.getLogger("clipped_sqn")


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="clipped-sqn", description="Clipped stochastic quasi-Newton experiments")
    ap.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = ap.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-data", help="write a synthetic dataset file")
    gen.add_argument("--out", required=True, help="output dataset path")
    gen.add_argument("--n", type=int, default=5000)
    gen.add_argument("--d", type=int, default=100)
    gen.add_argument("--sparsity", type=float, default=0.1)
    gen.add_argument("--labels", choices=("pm1", "zero_one"), default="pm1")
    gen.add_argument("--seed", type=int, default=1)

    run = sub.add_parser("run", help="run a comparison experiment")
    run.add_argument("--config", help="experiment config file (defaults to the desk-scale setup)")
    run.add_argument("--objective", default="robust_lr", help="objective when no config is given")
    run.add_argument("--seed", type=int, help="run this single seed instead of the configured list")
    run.add_argument("--out", help="output directory (overrides the config)")
    run.add_argument("--strict-theory", action="store_true", help="reject (beta, c) outside the admissible ranges")
    run.add_argument("--theory-batches", action="store_true", help="use batch sizes and restart period from eps")

    sub.add_parser("verify", help="run the built-in numerical self-checks")

    plot = sub.add_parser("plot", help="re-render the loss plot from written traces")
    plot.add_argument("--out", required=True, help="experiment output directory")
    plot.add_argument("--config", help="config whose roster fixes the legend order")
    return ap


def _cmd_gen_data(args) -> int:
    ds = objectives.generate_synthetic(args.d, args.n, args.sparsity, args.labels, seed=args.seed)
    objectives.save_dataset(ds, args.out)
    print(f"wrote {ds.size} samples of dimension {ds.dimension} to {args.out}")
    return EXIT_OK


def _cmd_run(args) -> int:
    cfg = load_config(args.config) if args.config else default_config(args.objective)
    changes = {}
    if args.seed is not None:
        changes["seeds"] = (args.seed,)
    if args.out:
        changes["output_dir"] = args.out
    if args.strict_theory:
        changes["strict_theory"] = True
    if args.theory_batches:
        changes["theory_batches"] = True
    if changes:
        cfg = cfg.replace(**changes)
    report = run_experiment(cfg)
    print(report.to_text())
    print(f"outputs written to {cfg.output_dir}")
    return EXIT_DIVERGED if report.any_aborted else EXIT_OK


def _cmd_verify(args) -> int:
    results = run_checks()
    for r in results:
        print(r.line())
    return EXIT_OK if all(r.passed for r in results) else EXIT_CONFIG


def _cmd_plot(args) -> int:
    roster = list(DEFAULT_ROSTER)
    if args.config:
        roster = [a.name for a in load_config(args.config).roster]
    svg = replot(args.out, roster)
    path = os.path.join(args.out, "loss_vs_samples.svg")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(svg)
    print(f"wrote {path}")
    return EXIT_OK


COMMANDS = {"gen-data": _cmd_gen_data, "run": _cmd_run, "verify": _cmd_verify, "plot": _cmd_plot}


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error at {exc.key}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OptimizerConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        # malformed dataset or trace files surface as ValueError
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
