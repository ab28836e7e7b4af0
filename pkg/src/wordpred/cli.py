"""Command-line entry points for the experiment drivers."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .errors import WordpredError
from .experiments import (
    ExperimentConfig,
    run_correlate,
    run_exp1,
    run_exp2,
    run_exp3,
    run_grid,
)


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--stimuli", type=Path, required=True)
    parser.add_argument("--cloze", type=Path)
    parser.add_argument("--rt", type=Path, required=True)
    parser.add_argument("--measure", choices=["SPR", "FP", "GP"], default="SPR")
    parser.add_argument("--dump", type=Path, help="PDLM distribution dump")
    parser.add_argument("--embeddings", type=Path, help="PDEM embedding file")
    parser.add_argument("--freq", type=Path, help="word,per_billion frequency CSV")
    parser.add_argument("--out-dir", type=Path, required=True)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument(
        "--toy-seed",
        type=int,
        help="serve distributions from the built-in toy provider instead of a dump",
    )
    parser.add_argument("--smoothing", type=int, default=200)
    parser.add_argument("--n-folds", type=int, default=10)
    parser.add_argument("--runs", type=int, default=5)
    parser.add_argument("--bonferroni-m", type=int)
    parser.add_argument("--keep-incorrect", action="store_true")


def _config(args: argparse.Namespace) -> ExperimentConfig:
    return ExperimentConfig(
        stimuli=args.stimuli,
        rt=args.rt,
        measure=args.measure,
        out_dir=args.out_dir,
        cloze=args.cloze,
        dump=args.dump,
        embeddings=args.embeddings,
        freq=args.freq,
        toy_seed=args.toy_seed,
        smoothing=args.smoothing,
        n_folds=args.n_folds,
        runs=args.runs,
        seed=args.seed,
        bonferroni_m=args.bonferroni_m,
        k=getattr(args, "k", 80),
        threshold=getattr(args, "threshold", 1e4),
        sa_aggregation="sum" if getattr(args, "sum_aggregation", False) else "mean",
        drop_incorrect=not args.keep_incorrect,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wordpred",
        description="Predictability estimators evaluated against reading times",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p1 = sub.add_parser("exp1", help="cloze vs LM probabilities")
    _add_common(p1)

    p2 = sub.add_parser("exp2", help="manipulated LM probabilities vs cloze")
    _add_common(p2)
    p2.add_argument("--hypothesis", choices=["h1", "h2", "h3"], required=True)
    p2.add_argument("--k", type=int, default=80, help="cluster count for h2")
    p2.add_argument(
        "--threshold", type=float, default=1e4,
        help="frequency threshold (per billion) for h3",
    )

    p3 = sub.add_parser("exp3", help="similarity-adjusted cloze vs LM scores")
    _add_common(p3)
    p3.add_argument(
        "--sum-aggregation", action="store_true",
        help="literal sum over responses instead of the mean",
    )

    pg = sub.add_parser("grid", help="smoothing x transform sweep")
    _add_common(pg)

    pc = sub.add_parser("correlate", help="cloze vs LM-based probability correlations")
    _add_common(pc)
    pc.add_argument("--k", type=int, default=80)
    pc.add_argument("--threshold", type=float, default=1e4)

    pt = sub.add_parser("make-toy", help="write the bundled toy dataset")
    pt.add_argument("--out-dir", type=Path, required=True)
    pt.add_argument("--seed", type=int, default=0)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    if args.command == "make-toy":
        from .toydata import make_toy_bundle

        paths = make_toy_bundle(args.out_dir, args.seed)
        for name, path in sorted(paths.items()):
            print(f"{name}: {path}")
        return 0

    config = _config(args)
    try:
        if args.command == "exp1":
            report = run_exp1(config)
        elif args.command == "exp2":
            report = run_exp2(config, args.hypothesis)
        elif args.command == "exp3":
            report = run_exp3(config)
        elif args.command == "grid":
            report = run_grid(config)
        else:
            report = run_correlate(config)
    except WordpredError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    for name, path in sorted(report.out_files.items()):
        print(f"{name}: {path}")
    if report.comparison is not None:
        failed = report.comparison.failed_folds
        if failed:
            print(f"error: {len(failed)} folds failed: {failed}", file=sys.stderr)
            for note in report.comparison.notes:
                print(f"  {note}", file=sys.stderr)
            return 2
        for key, p in report.comparison.p_values.items():
            adj = report.comparison.p_adjusted[key]
            print(f"{key}: p={p:.5g} adjusted={adj:.5g}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
