"""Command-line entry point: run, sweep, and analyze workflows.

Exit codes: 0 success, 1 usage or configuration problem, 2 runtime failure.
All artifacts land inside the directory given by --out.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from .analysis import build_report, build_report_from_series
from .config import (
    ConfigError,
    MarketConfig,
    apply_overrides,
    coerce_value,
    load_config_file,
    market_config,
)
from .errors import SimulationError
from .sweep import (
    SweepSpec,
    aggregate,
    execute_sweep,
    write_aggregate_csv,
    write_rows_csv,
    write_series_csv,
)
from . import market

log = logging.getLogger("hetmarket.cli")


class UsageError(Exception):
    """Bad command line or unreadable input; exits with code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _build_parser():
    parser = _Parser(
        prog="hetmarket",
        description="Agent-based market simulator and analysis toolkit",
    )
    sub = parser.add_subparsers(dest="command")

    def common(p, config=True):
        if config:
            p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument(
            "--set",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="override a config key (repeatable; last wins)",
        )
        p.add_argument("--quiet", action="store_true",
                       help="suppress per-run progress lines")

    p_run = sub.add_parser("run", help="execute one simulation run")
    common(p_run)
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="run a replicated parameter sweep")
    common(p_sweep)
    p_sweep.add_argument("--parallelism", type=int, default=1, metavar="N",
                         help="worker processes (output is identical for any N)")
    p_sweep.add_argument("--dump-series", action="store_true",
                         help="also write each run's tick series CSV")
    p_sweep.set_defaults(func=cmd_sweep)

    p_an = sub.add_parser("analyze", help="analyze an existing series CSV")
    p_an.add_argument("input", help="CSV file with a 'price' column")
    common(p_an, config=False)
    p_an.set_defaults(func=cmd_analyze)

    return parser


def _format_value(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_report(report, path, config=None):
    """Write a report (and the effective config) as key = value lines."""
    lines = []
    if config is not None:
        for name in sorted(f.name for f in config.__dataclass_fields__.values()):
            lines.append(f"config.{name} = {_format_value(getattr(config, name))}")
    for key, value in report.to_keyvalues():
        lines.append(f"{key} = {_format_value(value)}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _load_effective_config(args):
    doc = load_config_file(args.config)
    doc = apply_overrides(doc, args.set)
    return doc, market_config(doc)


def cmd_run(args) -> int:
    doc, config = _load_effective_config(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    output = market.run(config)
    write_series_csv(output, out_dir / "series.csv")
    report = build_report(output)
    write_report(report, out_dir / "report.txt", config=config)
    log.info("run complete: sigma_p=%.6g, %d measured ticks -> %s",
             report.sigma_p, report.n_ticks, out_dir)
    return 0


def cmd_sweep(args) -> int:
    doc, base = _load_effective_config(args)
    replications = doc.get("replications", 10)
    raw_grid = doc.get("grid", {})
    if not isinstance(raw_grid, dict):
        raise ConfigError("grid", "must be an object of key -> value list")
    grid = {}
    for key, values in raw_grid.items():
        if not isinstance(values, list):
            raise ConfigError(key, "grid values must be a list")
        grid[key] = [coerce_value(key, v) for v in values]
    spec = SweepSpec(base=base, grid=grid, replications=replications,
                     master_seed=base.seed)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    series_dir = out_dir / "series" if args.dump_series else None
    if series_dir is not None:
        series_dir.mkdir(parents=True, exist_ok=True)

    rows = execute_sweep(spec, parallelism=args.parallelism,
                         series_dir=series_dir)
    write_rows_csv(rows, spec.grid_keys, out_dir / "rows.csv")
    write_aggregate_csv(aggregate(rows), spec.grid_keys,
                        out_dir / "aggregate.csv")
    n_err = sum(1 for r in rows if r.error is not None)
    log.info("sweep complete: %d rows (%d failed) -> %s",
             len(rows), n_err, out_dir)
    return 0


def _read_series_csv(path):
    """Parse a series CSV into (prices, excess_or_None), measured rows only."""
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"input file not found: {path}")
    prices = []
    excess = []
    measured = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise UsageError(f"{path}: line 1: empty file") from None
        cols = {name.strip(): i for i, name in enumerate(header)}
        if "price" not in cols:
            raise UsageError(f"{path}: line 1: no 'price' column in header")
        i_price = cols["price"]
        i_excess = cols.get("excess_demand")
        i_meas = cols.get("is_measured")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                prices.append(float(row[i_price]))
                if i_excess is not None:
                    excess.append(float(row[i_excess]))
                if i_meas is not None:
                    measured.append(int(row[i_meas]))
            except (ValueError, IndexError) as exc:
                raise UsageError(f"{path}: line {lineno}: {exc}") from None
    prices = np.asarray(prices)
    excess_arr = np.asarray(excess) if i_excess is not None else None
    if i_meas is not None:
        keep = np.asarray(measured, dtype=bool)
        prices = prices[keep]
        if excess_arr is not None:
            excess_arr = excess_arr[keep]
    return prices, excess_arr


def cmd_analyze(args) -> int:
    overrides = dict(
        apply_overrides({}, args.set)
    )
    memory = overrides.get("memory", MarketConfig().memory)
    prices, excess = _read_series_csv(args.input)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    report = build_report_from_series(prices, excess, memory=memory)
    write_report(report, out_dir / "report.txt")
    log.info("analysis of %d prices -> %s", len(prices), out_dir)
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "command", None) is None:
            raise UsageError("hetmarket: a subcommand is required "
                             "(run, sweep, or analyze)")
        logging.basicConfig(
            stream=sys.stderr,
            level=logging.WARNING if args.quiet else logging.INFO,
            format="%(message)s",
        )
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SimulationError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


def run_main():
    sys.exit(main())


if __name__ == "__main__":
    run_main()
