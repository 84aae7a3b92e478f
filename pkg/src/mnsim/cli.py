"""Command-line front end: validate, update-config, run, read-check, aggregate.

Errors go to standard error as one JSON object per failure; exit status is 0
on success, 1 when the operation fails and 2 on usage errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Sequence

from mnsim import aggregates, config, engine
from mnsim.schema import DocumentParseError


def _parse_value(raw: str) -> Any:
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def _overrides(items: Sequence[str]) -> dict[str, Any]:
    out: dict[str, Any] = {}
    for item in items:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise ValueError(f"--set expects KEY=VALUE, got {item!r}")
        out[key] = _parse_value(value)
    return out


def _error(kind: str, message: str, **extra: Any) -> None:
    print(json.dumps({"error": kind, "message": message, **extra}, sort_keys=True), file=sys.stderr)


def cmd_validate(args: argparse.Namespace) -> int:
    report = config.validate_config(args.doc, args.schema)
    print(json.dumps(report.to_dict(), indent=2))
    return 0 if report.is_valid else 1


def cmd_update(args: argparse.Namespace) -> int:
    overrides = _overrides(args.set or [])
    if args.overrides:
        overrides.update(json.loads(Path(args.overrides).read_text(encoding="utf-8")))
    config.update_config(args.doc, overrides, args.schema, args.out)
    print(args.out)
    return 0


def _run_one(args: argparse.Namespace, out: Path, seed: int | None) -> str:
    result = engine.run_simulation(
        args.sim,
        args.persons,
        args.antennas,
        (args.map, args.subdivisions),
        out,
        seed=seed,
        prior_paths=args.prior or (),
    )
    return str(result.output_dir)


def cmd_run(args: argparse.Namespace) -> int:
    for path, schema in ((args.sim, "simulation_rules"), (args.persons, "persons_rules"), (args.antennas, "antennas_rules"), (args.subdivisions, "map_rules")):
        report = config.validate_config(path, schema)
        if not report.is_valid:
            raise config.ConfigValidationError(str(path), report)
    if args.replications <= 1:
        print(_run_one(args, Path(args.out), args.seed))
        return 0
    base = args.seed if args.seed is not None else config.parse_simulation_config(args.sim).random_seed
    jobs = [(Path(args.out) / f"rep_{i:03d}", base + i) for i in range(args.replications)]
    with ProcessPoolExecutor() as pool:
        for done in pool.map(_run_one, [args] * len(jobs), *zip(*jobs)):
            print(done)
    return 0


def _load(args: argparse.Namespace) -> aggregates.SimData:
    return aggregates.read_sim_data(aggregates.output_file_map(args.input, args.mno), crs_code=args.crs)


def cmd_read_check(args: argparse.Namespace) -> int:
    data = _load(args)
    summary = {
        "crs": data.crs_code,
        "grid": {"n_cols": data.grid.n_cols, "n_rows": data.grid.n_rows},
        "subregions": [s.long_name for s in data.territory.subregions],
        "antennas": len(data.network),
        "signal_rows": len(data.signal),
        "coverage_cells": len(data.coverage),
        "events": len(data.events),
        "individuals_rows": len(data.individuals),
    }
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


def aggregate_table(data: aggregates.SimData, what: Sequence[str], by: Sequence[str], od: bool = False) -> aggregates.AggregateTable:
    if od:
        return aggregates.compute_odmatrix(data.individuals, what, by, data.key_domain(by))
    return aggregates.compute_total(data.individuals, what, by, data.key_domain(by))


def cmd_aggregate(args: argparse.Namespace) -> int:
    what = [w for w in args.what.split(",") if w]
    by = [b for b in args.by.split(",") if b]
    table = aggregate_table(_load(args), what, by, args.od)
    text = table.to_csv()
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8", newline="")
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mnsim", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a document against a rule file")
    p.add_argument("--doc", required=True)
    p.add_argument("--schema", required=True, help="rule file path or built-in name, e.g. simulation_rules")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("update-config", help="write a copy of a document with overrides applied")
    p.add_argument("--doc", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="VALUE is parsed as JSON when possible")
    p.add_argument("--overrides", help="JSON file with a nested override map")
    p.set_defaults(func=cmd_update)

    p = sub.add_parser("run", help="validate inputs and run a simulation")
    p.add_argument("--sim", required=True)
    p.add_argument("--persons", required=True)
    p.add_argument("--antennas", required=True)
    p.add_argument("--map", required=True)
    p.add_argument("--subdivisions", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--prior", action="append", help="prior-probability file carried into the manifest")
    p.add_argument("--replications", type=int, default=1)
    p.set_defaults(func=cmd_run)

    for name, func, helptext in (
        ("read-check", cmd_read_check, "load an output directory and summarise it"),
        ("aggregate", cmd_aggregate, "ground-truth totals or OD matrices as CSV"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--in", dest="input", required=True)
        p.add_argument("--mno", help="MNO name (default: first in the manifest)")
        p.add_argument("--crs", type=int)
        if name == "aggregate":
            p.add_argument("--what", required=True, help="comma-separated measures")
            p.add_argument("--by", required=True, help="comma-separated keys")
            p.add_argument("--od", action="store_true", help="origin-destination matrix instead of totals")
            p.add_argument("--out", help="write CSV here instead of standard output")
        p.set_defaults(func=func)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except config.ConfigValidationError as exc:
        _error("validation", str(exc), report=exc.report.to_dict())
    except DocumentParseError as exc:
        _error("parse", str(exc))
    except (OSError, ValueError) as exc:
        _error(type(exc).__name__, str(exc))
    return 1


if __name__ == "__main__":
    sys.exit(main())
