"""Command-line entry point.

    ilde run CONFIG [--out DIR] [--seed N ...] [--algorithm A] [--variant V] [--workers N]
    ilde defaults [PATH]

Output directory precedence: ``--out``, then ``output_dir`` in the config,
then ``$ILDE_OUTPUT_ROOT/<config name>``, then ``./ilde-results/<config name>``.

Exit codes: 0 success, 1 some jobs failed, 2 configuration error, 3 every job failed.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .config import ALGORITHMS, ConfigError, ExperimentConfig, dumps, emit_config, parse_config
from .experiment import EXIT_CONFIG, run_experiment
from .kvformat import KvFormatError
from .practical import VARIANTS

OUTPUT_ROOT_ENV = "ILDE_OUTPUT_ROOT"


def resolve_output_dir(cfg: ExperimentConfig, config_path, override=None) -> str:
    if override:
        return override
    if cfg.output_dir:
        return cfg.output_dir
    root = os.environ.get(OUTPUT_ROOT_ENV) or "ilde-results"
    return os.path.join(root, Path(config_path).stem)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ilde", description="Imitation learning with double exploration on finite MDPs.")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run an experiment from a config file")
    run.add_argument("config", help="experiment config (key = value format)")
    run.add_argument("--out", help="output directory")
    run.add_argument("--seed", type=int, action="append", dest="seeds", help="seed override (repeatable)")
    run.add_argument("--algorithm", choices=ALGORITHMS, help="algorithm override")
    run.add_argument("--variant", choices=VARIANTS, help="practical-variant override")
    run.add_argument("--workers", type=int, default=1, help="parallel jobs (default 1)")
    defaults = sub.add_parser("defaults", help="print or write the default config")
    defaults.add_argument("path", nargs="?", help="file to write instead of stdout")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "defaults":
        cfg = ExperimentConfig()
        if args.path:
            emit_config(cfg, args.path)
        else:
            sys.stdout.write(dumps(cfg))
        return 0

    try:
        cfg = parse_config(args.config)
        cfg = cfg.with_overrides(
            seeds=tuple(args.seeds) if args.seeds else None,
            algorithm=args.algorithm,
            variant=args.variant,
        )
        if args.workers < 1:
            raise ConfigError("--workers", "must be positive")
    except (ConfigError, KvFormatError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    out_dir = resolve_output_dir(cfg, args.config, args.out)
    outcome = run_experiment(cfg, out_dir, workers=args.workers)
    for r in outcome.results:
        if not r.ok:
            print(f"seed {r.seed} (tremble {r.tremble}) failed: {r.error}", file=sys.stderr)
    for row in outcome.summary:
        print(f"tremble={row['tremble_prob']} final_J={row['final_J']} expert_J={row['expert_J']} "
              f"improvement={row['improvement_vs_expert']} efficiency={row['sample_efficiency']}")
    print(f"results written to {outcome.out_dir}")
    return outcome.exit_code


if __name__ == "__main__":
    sys.exit(main())
