"""Command-line entry point: ``ergoproc <experiment> --config cfg.json --out DIR``.

Exit codes: 0 all verdicts pass, 1 a verdict fails, 2 config error,
3 resource or horizon error.
"""

import argparse
import json
import sys

from .errors import ConfigError, ConvergenceError, ExperimentError, ResourceError, UsageError
from .experiments import EXPERIMENTS, ExperimentConfig, load_config, load_report, report_render, run

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_RESOURCE = 0, 1, 2, 3


def build_parser():
    p = argparse.ArgumentParser(prog="ergoproc", description="Seeded experiments on random products of positive maps.")
    p.add_argument("command", choices=EXPERIMENTS + ("report",))
    p.add_argument("--config", help="JSON experiment config")
    p.add_argument("--out", help="output directory (overrides the config)")
    p.add_argument("--seed-override", type=int, help="replace the config seeds with this one")
    p.add_argument("--jobs", type=int, default=1, help="worker processes for replica-level work")
    return p


def _config(args):
    if args.config is None:
        if args.command != "metric-selftest":
            raise UsageError("--config is required")
        cfg = ExperimentConfig("metric-selftest")
    else:
        try:
            cfg = load_config(args.config)
        except OSError as exc:
            raise UsageError(f"cannot read config: {exc}") from exc
    if cfg.experiment != args.command:
        raise ConfigError(f"config is for {cfg.experiment!r}, not {args.command!r}", "/experiment")
    if args.seed_override is not None:
        if args.seed_override < 0:
            raise UsageError("--seed-override must be nonnegative")
        cfg.seeds = [args.seed_override]
    if args.out:
        cfg.out = args.out
    return cfg


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "report":
            report = load_report(args.out or ".")
        else:
            if args.jobs < 1:
                raise UsageError("--jobs must be >= 1")
            report = run(_config(args), jobs=args.jobs)
    except (UsageError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ResourceError, ExperimentError, ConvergenceError, MemoryError) as exc:
        print(f"resource error: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    sys.stdout.write(report_render(report))
    return EXIT_PASS if report.passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
