"""Command-line entry point: ``cscgame {run,validate,list,report}``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .analysis import NeGapReport, ne_gap_table
from .errors import ConfigurationError
from .harness import ExperimentConfig, default_output_dir, load_summary, preset, preset_names, run_experiment

EXIT_OK, EXIT_ERROR, EXIT_USAGE = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="cscgame", description="Game-theoretic small-cell experiments.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="run a preset or a config file")
    src = run.add_mutually_exclusive_group(required=True)
    src.add_argument("--preset", choices=preset_names() + ["fig8-robust-9cell"])
    src.add_argument("--config", type=Path)
    run.add_argument("--seed", type=int, help="base seed override")
    run.add_argument("--replications", type=int)
    run.add_argument("--out", type=Path, help="output directory (default: $CSCGAME_OUT or ./results)")
    run.add_argument("--jobs", type=int, default=1)

    val = sub.add_parser("validate", help="check a config file")
    val.add_argument("config", type=Path)

    sub.add_parser("list", help="list shipped presets")

    rep = sub.add_parser("report", help="print a table from a results directory")
    rep.add_argument("results", type=Path)
    rep.add_argument("--metric", default="ne-gap", choices=["ne-gap", "summary"])
    return p


def _load_config(args) -> ExperimentConfig:
    if args.preset:
        cfg = preset(args.preset)
    else:
        cfg = ExperimentConfig.load(args.config)
    if args.seed is not None:
        cfg.base_seed = args.seed
        cfg.seeds = None
    if args.replications is not None:
        cfg.replications = args.replications
    cfg.output_dir = str(args.out) if args.out else default_output_dir()
    return cfg.validate()


def report_text(summary: dict, metric: str) -> str:
    if metric == "ne-gap":
        gaps = summary["metrics"].get("ne_gap")
        if gaps is None:
            raise ConfigurationError(f"results of experiment {summary['experiment']!r} carry no ne-gap metric")
        return ne_gap_table({k: NeGapReport.from_dict(v) for k, v in gaps.items()})
    lines = []
    for name, doc in summary["metrics"].items():
        if not isinstance(doc, dict) or "per_config" not in doc:
            continue
        for label, agg in doc["per_config"].items():
            lines.append(f"{name:<40} {label:<18} n={agg['n']:<4} mean={agg['mean']:.6g} median={agg['median']:.6g}")
    return "\n".join(lines) + "\n"


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.command == "list":
            for name in preset_names():
                cfg = preset(name)
                sweep = ", ".join(f"{k}={v}" for k, v in cfg.sweep.items()) or "-"
                print(f"{name}\t{cfg.replications} seeds\t{sweep}")
        elif args.command == "validate":
            cfg = ExperimentConfig.load(args.config)
            print(f"{args.config}: ok ({cfg.experiment}, digest {cfg.digest()[:12]})", file=sys.stderr)
        elif args.command == "run":
            cfg = _load_config(args)
            if args.jobs < 1:
                raise ConfigurationError("--jobs must be at least 1")
            summary = run_experiment(cfg, jobs=args.jobs)
            if args.verbose:
                print(json.dumps(summary["failures"]), file=sys.stderr)
            print(f"wrote {cfg.output_dir}", file=sys.stderr)
            if summary["failures"]:
                print(f"{sum(len(v) for v in summary['failures'].values())} runs failed", file=sys.stderr)
                return EXIT_ERROR
        elif args.command == "report":
            sys.stdout.write(report_text(load_summary(args.results), args.metric))
    except (ConfigurationError, KeyError) as exc:
        print(f"cscgame: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (OSError, ValueError) as exc:
        print(f"cscgame: {exc}", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
