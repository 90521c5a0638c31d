"""Command-line entry point.

Subcommands:

* ``train-source`` -- plain-SAC training, checkpoint + metrics CSV.
* ``train-cup``    -- transfer training with source checkpoints.
* ``ablate``       -- sweep regularization weights or source sets.
* ``verify``       -- improvement-bound and identity campaigns on random MDPs.
* ``grad-check``   -- finite-difference validation of every loss gradient.
* ``report``       -- aggregate CSVs and figures from run directories.

Exit codes: 0 success, 1 configuration error, 2 runtime/numeric abort,
3 verification failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import ExperimentConfig, load_config
from .errors import CheckpointError, ConfigError, NumericError

__all__ = ["main"]


def _common_flags(p: argparse.ArgumentParser, need_out: bool = True):
    p.add_argument("--config", default=None, help="config file path")
    p.add_argument("--seed", type=int, default=None,
                   help="run a single seed instead of the configured list")
    p.add_argument("--out", required=need_out, help="output directory")
    p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                   help="config override, repeatable")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cuprl", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-source", help="train a plain-SAC source policy")
    _common_flags(p)

    p = sub.add_parser("train-cup", help="train with critic-guided policy reuse")
    _common_flags(p)

    p = sub.add_parser("ablate", help="sweep hyper-parameters or source sets")
    _common_flags(p)
    p.add_argument("--betas", default=None,
                   help="comma list of beta1*beta2 products, swept at fixed ratio")
    p.add_argument("--source-sets", default=None,
                   help="semicolon-separated source-set variants, each a comma "
                        "list of checkpoint paths (empty item = no sources)")

    p = sub.add_parser("verify", help="run the tabular verification campaigns")
    p.add_argument("--out", default=None, help="directory for the report CSV")
    p.add_argument("--mdps", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("grad-check", help="finite-difference gradient suite")
    p.add_argument("--batches", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("report", help="aggregate metrics and render figures")
    p.add_argument("--runs", required=True, help="directory containing run outputs")
    p.add_argument("--out", required=True, help="directory for figures and tables")
    return parser


def _seeds(config: ExperimentConfig, args) -> list:
    return [args.seed] if args.seed is not None else config.seeds


def _cmd_train(args, use_sources: bool) -> int:
    from .harness import train_cup, train_source

    config = load_config(args.config, args.override)
    runner = train_cup if use_sources else train_source
    for seed in _seeds(config, args):
        result = runner(config, seed, args.out)
        stt = result.steps_to_threshold
        print(f"seed {seed}: final_success={result.final_success:.2f} "
              f"steps_to_threshold={stt if stt is not None else '-'} "
              f"metrics={result.metrics_path}")
    return 0


def _beta_pair(product: float, ratio: float) -> tuple:
    # keep beta1/beta2 at the configured ratio while scaling the product
    beta1 = (product * ratio) ** 0.5
    return beta1, beta1 / ratio


def _cmd_ablate(args) -> int:
    from .harness import run_ablation

    config = load_config(args.config, args.override)
    sweep = []
    if args.betas:
        ratio = float(config["cup.beta1"]) / float(config["cup.beta2"])
        for raw in args.betas.split(","):
            product = float(raw)
            b1, b2 = _beta_pair(product, ratio)
            sweep.append((f"beta_{raw.strip()}", {"cup.beta1": b1, "cup.beta2": b2}))
    if args.source_sets is not None:
        for i, variant in enumerate(args.source_sets.split(";")):
            paths = [p.strip() for p in variant.split(",") if p.strip()]
            sweep.append((f"sources_{i}", {"run.sources": paths}))
    agg = run_ablation(config, sweep, args.out)
    print(f"ablation summary: {agg}")
    return 0


def _cmd_verify(args) -> int:
    from .verify import (
        guidance_bound_campaign,
        kl_bound_campaign,
        performance_difference_campaign,
    )

    summaries = [
        guidance_bound_campaign(n_mdps=args.mdps, seed=args.seed),
        guidance_bound_campaign(n_mdps=args.mdps, seed=args.seed, alpha=0.0),
        kl_bound_campaign(n_mdps=args.mdps, seed=args.seed),
        kl_bound_campaign(n_mdps=args.mdps, seed=args.seed, alpha=0.0),
        performance_difference_campaign(seed=args.seed),
    ]
    for s in summaries:
        print(s.line())
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        path = out / "verify_report.csv"
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("theorem_id,instances,min_margin,holds\n")
            for s in summaries:
                fh.write(f"{s.name},{s.instances},{s.min_margin!r},{s.holds}\n")
        print(f"report: {path}")
    return 0 if all(s.holds for s in summaries) else 3


def _cmd_grad_check(args) -> int:
    from .verify import gradient_suite

    results = gradient_suite(n_batches=args.batches, seed=args.seed)
    for r in results:
        print(r.line())
    return 0 if all(r.passed for r in results) else 3


def _cmd_report(args) -> int:
    from .report import render_report

    for path in render_report(args.runs, args.out):
        print(f"wrote {path}")
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "train-source":
            return _cmd_train(args, use_sources=False)
        if args.command == "train-cup":
            return _cmd_train(args, use_sources=True)
        if args.command == "ablate":
            return _cmd_ablate(args)
        if args.command == "verify":
            return _cmd_verify(args)
        if args.command == "grad-check":
            return _cmd_grad_check(args)
        if args.command == "report":
            return _cmd_report(args)
        raise ConfigError(f"unknown command {args.command!r}")
    except (ConfigError, CheckpointError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (NumericError, AssertionError) as exc:
        print(f"numeric abort: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
