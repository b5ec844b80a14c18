"""Command line entry point: ``sbrbench prepare|run|tune|coldstart|report``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import harness


def _load(args) -> harness.ExperimentConfig:
    config = harness.ExperimentConfig.load(args.config)
    if args.seed is not None:
        config.seed = args.seed
    if args.threads is not None:
        config.threads = args.threads
    if args.out is not None:
        config.output = Path(args.out)
    return config


def _prepared(args, config):
    if getattr(args, "prepared", None):
        return harness.load_prepared(args.prepared)
    return None


def cmd_prepare(args) -> int:
    config = _load(args)
    cache = Path(args.cache) if args.cache else Path(config.output) / "prepared"
    prep = harness.prepare(config, cache)
    for sl in prep.slices:
        print(f"slice {sl.slice_index}: {len(sl.train)} train / {len(sl.test)} test sessions")
    print(f"cached {len(prep.slices)} slice(s) in {cache}")
    return 0


def cmd_run(args) -> int:
    config = _load(args)
    results = harness.run_experiment(config, _prepared(args, config))
    k = config.cutoffs[-1]
    for label, rep in results.items():
        print(f"{label:10s} HR@{k}={rep.metrics[f'HR@{k}']:.4f} MRR@{k}={rep.metrics[f'MRR@{k}']:.4f}")
    failed = len(config.algorithms) - len(results)
    if failed:
        print(f"{failed} algorithm(s) failed, see {config.output}", file=sys.stderr)
    return 1 if not results else 0


def cmd_tune(args) -> int:
    config = _load(args)
    spec = harness.TuneSpec.from_dict(json.loads(Path(args.spec).read_text()))
    if args.iterations is not None:
        spec = harness.TuneSpec(spec.algorithm, spec.space, args.iterations, spec.objective)
    best, trials = harness.tune(config, spec, _prepared(args, config))
    ok = sum("objective" in t for t in trials)
    print(f"{ok}/{len(trials)} successful trials; best {spec.objective} parameters:")
    print(json.dumps(best, indent=2, sort_keys=True))
    return 0


def _keep_days(values):
    out = []
    for v in values:
        out.append(None if v == "full" else float(v))
    return out


def cmd_coldstart(args) -> int:
    config = _load(args)
    path = harness.coldstart_sweep(config, _keep_days(args.keep_days), _prepared(args, config))
    print(f"wrote {path}")
    return 0


def cmd_report(args) -> int:
    csv_text, table = harness.report([Path(p) for p in args.results])
    print(table, end="")
    if args.csv:
        Path(args.csv).write_text(csv_text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sbrbench", description="Session-based recommendation benchmark.")
    parser.add_argument("--seed", type=int, default=None, help="override the configured random seed")
    parser.add_argument("--threads", type=int, default=None, help="algorithms evaluated in parallel")
    parser.add_argument("--out", default=None, help="output directory (overrides the config)")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="sessionize, split and cache the slices")
    p.add_argument("config")
    p.add_argument("--cache", help="cache directory (default <out>/prepared)")
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("run", help="fit and evaluate every configured algorithm")
    p.add_argument("config")
    p.add_argument("--prepared", help="read slices from a prepare cache")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("tune", help="random search on a validation split")
    p.add_argument("config")
    p.add_argument("--spec", required=True, help="JSON file with algorithm, space, iterations, objective")
    p.add_argument("--iterations", type=int)
    p.add_argument("--prepared")
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("coldstart", help="rerun with truncated training windows")
    p.add_argument("config")
    p.add_argument("--keep-days", nargs="+", required=True, help="days to keep, or 'full'")
    p.add_argument("--prepared")
    p.set_defaults(func=cmd_coldstart)

    p = sub.add_parser("report", help="merge result files into one table")
    p.add_argument("results", nargs="+")
    p.add_argument("--csv", help="also write the merged table as CSV")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (harness.ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
