"""Command-line entry point.

    rulforge prepare  --config run.json [--out DIR] [--seed N]
    rulforge analyze  --config run.json [--out DIR] [--seed N]
    rulforge train    --config run.json [--out DIR] [--seed N]
    rulforge evaluate --config run.json [--model PATH] [--out DIR] [--seed N]
    rulforge compare  --config run.json [--out DIR] [--seed N]

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
failure.
"""

from __future__ import annotations

import argparse
import sys

from .config import load_run_config
from .errors import ConfigError, DataError, RulforgeError
from .pipeline import cmd_analyze, cmd_compare, cmd_evaluate, cmd_prepare, cmd_train

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rulforge",
        description="Remaining-useful-life estimation from run-to-failure sensor data",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (
        ("prepare", "build preprocessing artifacts (snapshots, frames, windows)"),
        ("analyze", "emit plot-ready exploratory tables for prepared data"),
        ("train", "train the configured model on prepared windows"),
        ("evaluate", "score a trained model on the test windows"),
        ("compare", "train and score the full model roster"),
    ):
        cmd = sub.add_parser(name, help=text)
        cmd.add_argument("--config", required=True, help="path to the JSON run config")
        cmd.add_argument("--out", help="override the configured output directory")
        cmd.add_argument("--seed", type=int, help="override the configured seed")
        if name == "evaluate":
            cmd.add_argument("--model", help="model file (default: <out>/model.rfc)")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = load_run_config(args.config, out_override=args.out, seed_override=args.seed)
        if args.command == "prepare":
            manifest = cmd_prepare(cfg)
        elif args.command == "analyze":
            manifest = cmd_analyze(cfg)
        elif args.command == "train":
            manifest = cmd_train(cfg)
        elif args.command == "evaluate":
            manifest = cmd_evaluate(cfg, model_path=args.model)
        else:
            manifest = cmd_compare(cfg)
    except ConfigError as exc:
        print(f"rulforge: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"rulforge: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except RulforgeError as exc:
        print(f"rulforge: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    files = ", ".join(manifest["files"])
    print(f"rulforge {args.command}: wrote {files} in {cfg.output_dir}")
    return EXIT_OK


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
