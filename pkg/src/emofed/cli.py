"""Command-line entry point: ``emofed {synth,prep,split,central,fed,report}``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import runner
from .config import load_config
from .errors import ConfigError, EmofedError

RUN_ROOT_ENV = "EMOFED_RUN_ROOT"


def _csv(kind):
    def parse(text: str):
        return [kind(v) for v in text.split(",") if v]

    return parse


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="experiment config JSON")
    p.add_argument("--set", dest="sets", action="append", default=[], metavar="PATH=VALUE", help="override any config field, e.g. fed.rounds=20")
    p.add_argument("--seed", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="emofed", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic long-tailed corpus")
    _common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--n", dest="n_examples", type=int)
    p.add_argument("--zipf-s", type=float)
    p.add_argument("--signal-ratio", type=float)

    p = sub.add_parser("prep", help="explode and normalize raw tweets")
    _common(p)
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--table", help="emoji category CSV (defaults to the bundled table)")
    p.add_argument("--mode", choices=["tokens", "plain"])

    p = sub.add_parser("split", help="80/10/10 train/validation/test split")
    _common(p)
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--by-source", action=argparse.BooleanOptionalAction, default=None)

    for name, help_text in (("central", "train the centralized reference model"), ("fed", "run the federated grid")):
        p = sub.add_parser(name, help=help_text)
        _common(p)
        p.add_argument("--splits", required=True, help="directory written by `emofed split`")
        p.add_argument("--run-dir", help=f"output directory (default: ${RUN_ROOT_ENV}/<command>-<config digest>)")
        p.add_argument("--balancing", type=_csv(str), help="comma list of none,resample,cost")
        p.add_argument("--epochs" if name == "central" else "--rounds", type=int)
        if name == "fed":
            p.add_argument("--algorithms", type=_csv(str))
            p.add_argument("--fractions", type=_csv(float))
            p.add_argument("--partitions", type=_csv(str))
            p.add_argument("--target", type=float)
            p.add_argument("--workers", type=int)

    p = sub.add_parser("report", help="render Markdown/CSV tables from a run directory")
    p.add_argument("run_dir")
    p.add_argument("--out", help="output directory (default: the run directory)")
    return parser


def _overrides(args: argparse.Namespace) -> dict:
    get = lambda name: getattr(args, name, None)  # noqa: E731
    o = {"seed": get("seed")}
    if args.command == "synth":
        o.update({"synth.n_examples": get("n_examples"), "synth.zipf_s": get("zipf_s"), "synth.signal_ratio": get("signal_ratio")})
    elif args.command == "prep":
        o.update({"prep.mode": get("mode"), "prep.table": get("table")})
    elif args.command == "split":
        o["split.by_source"] = get("by_source")
    elif args.command == "central":
        o.update({"central.balancing": get("balancing"), "central.epochs": get("epochs")})
    elif args.command == "fed":
        o.update(
            {
                "fed.balancing": get("balancing"),
                "fed.rounds": get("rounds"),
                "fed.algorithms": get("algorithms"),
                "fed.fractions": get("fractions"),
                "fed.partitions": get("partitions"),
                "fed.target": get("target"),
                "fed.workers": get("workers"),
            }
        )
    return o


def _run_dir(args, cfg) -> Path:
    if args.run_dir:
        return Path(args.run_dir)
    root = os.environ.get(RUN_ROOT_ENV)
    if not root:
        raise ConfigError(f"--run-dir not given and ${RUN_ROOT_ENV} is unset")
    return runner.default_run_dir(root, args.command, cfg)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "report":
            result = runner.build_report(args.run_dir, args.out)
            for m in result["missing"]:
                print(f"missing run: {m}", file=sys.stderr)
        else:
            cfg = load_config(args.config, _overrides(args), args.sets)
            if args.command == "synth":
                result = runner.run_synth(cfg, args.out)
            elif args.command == "prep":
                result = runner.run_prep(cfg, args.input, args.out)
            elif args.command == "split":
                result = runner.run_split(cfg, args.input, args.out)
            else:
                run_dir = _run_dir(args, cfg)
                fn = runner.run_central if args.command == "central" else runner.run_fed
                fn(cfg, args.splits, run_dir)
                result = {"run_dir": str(run_dir)}
    except EmofedError as exc:
        print(f"emofed {args.command}: {exc}", file=sys.stderr)
        return exc.exit_code
    if isinstance(result, dict):
        result.pop("config", None)
    print(json.dumps(result, sort_keys=True, ensure_ascii=False))
    return 0


if __name__ == "__main__":
    sys.exit(main())
