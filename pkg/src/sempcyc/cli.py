"""Command-line entry point: ``sempcyc <command> [--config FILE] [--set key=value ...]``."""
from __future__ import annotations

import argparse
import json
import sys

from .config import load_config
from .errors import CheckpointError, ConfigError, FormatError, NumericError
from .pipeline import COMMANDS, run_experiment

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

HELP = {
    "build-sideinfo": "build class side-information vectors from word vectors and a taxonomy",
    "synth-data": "write a synthetic seen/unseen dataset into the run directory",
    "train": "train the model on the seen classes and write a checkpoint",
    "embed": "map every sketch and image into the semantic space",
    "fit-itq": "fit ITQ on seen-class embeddings and write binary codes",
    "retrieve": "rank the gallery for every unseen sketch and dump the top hits",
    "eval": "score retrieval: metrics JSON and an 11-point PR curve",
    "ablate": "train and score every ablation over several seeds",
    "sweep-sideinfo": "retrain on shrinking side-information subsets and score each",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sempcyc", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    for name in COMMANDS:
        p = sub.add_parser(name, help=HELP[name], description=HELP[name])
        p.add_argument("-c", "--config", help="flat key=value config file")
        p.add_argument("-s", "--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override one config key (repeatable)")
        p.add_argument("--run-dir", help="shortcut for --set run.dir=...")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = list(args.set)
    if args.run_dir:
        overrides.append(f"run.dir={args.run_dir}")
    try:
        cfg = load_config(args.config, overrides)
        summary = run_experiment(cfg, args.command)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (FormatError, CheckpointError, FileNotFoundError, KeyError, ValueError) as e:
        msg = e.args[0] if isinstance(e, KeyError) and e.args else e
        print(f"data error: {msg}", file=sys.stderr)
        return EXIT_DATA
    except (NumericError, FloatingPointError) as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    print(json.dumps({"command": args.command, "config_hash": cfg.hash(), **summary},
                     indent=2, sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
