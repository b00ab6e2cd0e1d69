"""Command-line interface.

    crowdbid run INSTANCE [--mechanism tvm|hvm|greedy|random] [--emit-search-log]
    crowdbid experiment CONFIG
    crowdbid verify [INSTANCE | --random N]
    crowdbid bench [CONFIG]
    crowdbid generate [--config POPULATION] [--budget B]

Global flags (before or after the command): --jobs, --seed, --out, --format.
Exit status is 0 on success, 1 when a verified property fails and 2 on bad
input.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .experiments import (MECHANISMS, BenchConfig, ConfigError, ExperimentConfig, run_bench,
                          run_experiment, run_mechanism)
from .hvm import hvm_run
from .model import InstanceError, instance_from_dict, instance_to_dict
from .oracle import property_battery
from .simulator import PopulationConfig, generate_population, population_instance, random_instance

EXIT_OK, EXIT_PROPERTY, EXIT_INPUT = 0, 1, 2


class InputError(Exception):
    pass


def _global_flags(parser: argparse.ArgumentParser, suppress: bool):
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    parser.add_argument("--jobs", type=int, default=d(1), help="worker threads (default 1)")
    parser.add_argument("--seed", type=int, default=d(None), help="master random seed")
    parser.add_argument("--out", type=Path, default=d(None), help="write output here instead of stdout")
    parser.add_argument("--format", choices=("json", "csv"), default=d(None),
                        help="output format (default depends on the command)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crowdbid", description="Budget-feasible crowdsensing auctions.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one auction on an instance file")
    p.add_argument("instance", type=Path)
    p.add_argument("--mechanism", choices=MECHANISMS, default="tvm")
    p.add_argument("--emit-search-log", action="store_true", help="include the budget search log (hvm)")
    p.add_argument("--theta", type=float, default=1.0, help="greedy acceptance scale")
    p.add_argument("--budget-clamped", action="store_true", help="greedy stops at the budget")
    _global_flags(p, suppress=True)

    p = sub.add_parser("experiment", help="run a sweep described by a JSON config")
    p.add_argument("config", type=Path)
    p.add_argument("--no-timing", action="store_true", help="drop wall-time columns")
    _global_flags(p, suppress=True)

    p = sub.add_parser("verify", help="check mechanism properties")
    p.add_argument("instance", type=Path, nargs="?")
    p.add_argument("--random", type=int, metavar="N", help="check N seeded random instances instead")
    p.add_argument("--max-bidders", type=int, default=8, help="largest random instance (default 8)")
    p.add_argument("--grid", type=int, default=20, help="misreport grid size (default 20)")
    _global_flags(p, suppress=True)

    p = sub.add_parser("bench", help="interpolation vs. bisection probe counts and scaling")
    p.add_argument("config", type=Path, nargs="?")
    _global_flags(p, suppress=True)

    p = sub.add_parser("generate", help="write a synthetic instance file")
    p.add_argument("--config", type=Path, help="population config JSON")
    p.add_argument("--bidders", type=int)
    p.add_argument("--budget", type=float, default=10.0)
    _global_flags(p, suppress=True)
    return parser


def _emit(args, text: str):
    if args.out is None:
        sys.stdout.write(text)
    else:
        args.out.write_text(text, encoding="utf-8")


def _read_json(path: Path):
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON: {exc}") from None


def _load(path: Path):
    data = _read_json(path)
    try:
        return instance_from_dict(data)
    except InstanceError as exc:
        raise InputError(f"{path}: {exc}") from None


def _rows_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def cmd_run(args) -> int:
    inst = _load(args.instance)
    log = None
    if args.mechanism == "hvm":
        out, log = hvm_run(inst, args.jobs)
    else:
        out, _ = run_mechanism(args.mechanism, inst, args.jobs, args.seed or 0,
                               args.theta, args.budget_clamped)
    if args.format == "csv":
        rows = [[k, repr(out.rewards[k]), repr(d)] for k, d in zip(out.winners, out.marginals)]
        _emit(args, _rows_csv(["participant_id", "reward", "marginal"], rows))
        return EXIT_OK
    doc = {"mechanism": args.mechanism, "outcome": out.to_dict()}
    if args.emit_search_log:
        doc["search_log"] = log.to_dict() if log is not None else None
    _emit(args, json.dumps(doc, indent=2) + "\n")
    return EXIT_OK


def cmd_experiment(args) -> int:
    try:
        cfg = ExperimentConfig.from_dict(_read_json(args.config), seed=args.seed)
    except ConfigError as exc:
        raise InputError(f"{args.config}: {exc}") from None
    report = run_experiment(cfg, args.jobs)
    timing = not args.no_timing
    _emit(args, report.to_json(timing) if args.format == "json" else report.to_csv(timing))
    return EXIT_OK


def _battery_lines(name: str, report) -> list[str]:
    lines = []
    for c in report.checks:
        status = "skip" if c.skipped else ("pass" if c.passed else "FAIL")
        if not c.hard:
            status += " (informational)"
        lines.append(f"{name:<12} {c.name:<28} {status:<22} {c.detail}")
    return lines


def cmd_verify(args) -> int:
    if (args.instance is None) == (args.random is None):
        raise InputError("give either an instance file or --random N")
    if args.instance is not None:
        batteries = [(str(args.instance), property_battery(_load(args.instance), grid_size=args.grid))]
    else:
        if args.random < 1 or args.max_bidders < 1:
            raise InputError("--random and --max-bidders must be positive")
        seed = 0 if args.seed is None else args.seed
        rng = np.random.default_rng(seed)
        batteries = []
        for k in range(args.random):
            m = int(rng.integers(1, args.max_bidders + 1))
            inst = random_instance([seed, k], m)
            batteries.append((f"random[{k}]", property_battery(inst, grid_size=args.grid)))
    failed = [name for name, rep in batteries if not rep.passed]
    summary = {
        "instances": len(batteries),
        "failed": failed,
        "reports": {name: rep.to_dict() for name, rep in batteries},
    }
    doc = json.dumps(summary, indent=2) + "\n"
    if args.format == "json" and args.out is None:
        sys.stdout.write(doc)
    else:
        lines = [line for name, rep in batteries for line in _battery_lines(name, rep)]
        lines.append(f"{len(batteries) - len(failed)}/{len(batteries)} instances pass every hard check")
        sys.stdout.write("\n".join(lines) + "\n")
        if args.out is not None:
            args.out.write_text(doc, encoding="utf-8")
    return EXIT_PROPERTY if failed else EXIT_OK


def cmd_bench(args) -> int:
    data = _read_json(args.config) if args.config else {}
    try:
        cfg = BenchConfig.from_dict(data, seed=args.seed)
    except (ConfigError, TypeError, ValueError) as exc:
        raise InputError(f"bench config: {exc}") from None
    res = run_bench(cfg)
    if args.format == "csv":
        cols = list(res["search"][0]) if res["search"] else []
        _emit(args, _rows_csv(cols, [[r[c] for c in cols] for r in res["search"]]))
    else:
        _emit(args, json.dumps(res, indent=2) + "\n")
    return EXIT_OK


def cmd_generate(args) -> int:
    try:
        pop = PopulationConfig.from_dict(_read_json(args.config)) if args.config else PopulationConfig()
        if args.bidders is not None:
            pop = replace(pop, bidder_count=args.bidders)
        if args.seed is not None:
            pop = replace(pop, rng_seed=args.seed)
        inst = population_instance(generate_population(pop), args.budget)
    except (TypeError, ValueError) as exc:
        raise InputError(f"population config: {exc}") from None
    _emit(args, json.dumps(instance_to_dict(inst)) + "\n")
    return EXIT_OK


COMMANDS = {
    "run": cmd_run,
    "experiment": cmd_experiment,
    "verify": cmd_verify,
    "bench": cmd_bench,
    "generate": cmd_generate,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.jobs < 1:
        print("crowdbid: --jobs must be >= 1", file=sys.stderr)
        return EXIT_INPUT
    try:
        return COMMANDS[args.command](args)
    except InputError as exc:
        print(f"crowdbid: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
