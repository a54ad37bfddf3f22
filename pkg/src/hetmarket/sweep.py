"""Experiment orchestration: seed derivation, replicated grid sweeps, CSV IO.

Row order is canonical (grid-major, replication-minor) no matter how many
workers execute the runs, so a sweep's scientific output is a pure function
of (spec, master seed). Wall-clock columns are the one exception and are
excluded from any byte-identity comparison.
"""

from __future__ import annotations

import concurrent.futures
import csv
import itertools
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .analysis import build_report
from .config import ConfigError, MarketConfig
from .market import run

log = logging.getLogger("hetmarket.sweep")

#: Parameters that may be swept over.
GRID_KEYS = ("g_max", "memory", "ratio_ref")

_MASK64 = (1 << 64) - 1
# splitmix64 finalizer constants (Steele, Lea & Flood's SplitMix generator)
_MIX_C1 = 0xBF58476D1CE4E5B9
_MIX_C2 = 0x94D049BB133111EB
# 2^64 / golden ratio, the splitmix64 stream increment
_GOLDEN = 0x9E3779B97F4A7C15
#: Replications per grid point must stay below this stride for injectivity.
REPLICATION_STRIDE = 1 << 20


def _mix64(z: int) -> int:
    z &= _MASK64
    z = ((z ^ (z >> 30)) * _MIX_C1) & _MASK64
    z = ((z ^ (z >> 27)) * _MIX_C2) & _MASK64
    return z ^ (z >> 31)


def derive_seed(master_seed, grid_index, replication_index) -> int:
    """Derive the 64-bit run seed for one (grid point, replication) cell.

    The construction is a splitmix64 finalizer over a unique counter xored
    with the master seed. Every step is a bijection on 64-bit integers, so
    distinct (grid_index, replication_index) pairs give distinct seeds as
    long as replication_index < REPLICATION_STRIDE and the counter does not
    wrap. Pure integer arithmetic; identical on every platform.
    """
    if grid_index < 0 or replication_index < 0:
        raise ValueError("indices must be non-negative")
    if replication_index >= REPLICATION_STRIDE:
        raise ValueError(f"replication index must be < {REPLICATION_STRIDE}")
    if not 0 <= master_seed <= _MASK64:
        raise ValueError("master_seed must be an unsigned 64-bit integer")
    counter = grid_index * REPLICATION_STRIDE + replication_index
    return _mix64(master_seed ^ _mix64(((counter + 1) * _GOLDEN) & _MASK64))


@dataclass(frozen=True)
class SweepSpec:
    """A parameter grid around a base config, replicated and seeded."""

    base: MarketConfig
    grid: dict = field(default_factory=dict)
    replications: int = 10
    master_seed: int = None  # defaults to base.seed

    def __post_init__(self):
        if self.replications < 1:
            raise ConfigError("replications", "must be >= 1")
        if self.replications >= REPLICATION_STRIDE:
            raise ConfigError(
                "replications", f"must be < {REPLICATION_STRIDE}"
            )
        if self.master_seed is None:
            object.__setattr__(self, "master_seed", self.base.seed)
        for key, values in self.grid.items():
            if key not in GRID_KEYS:
                raise ConfigError(
                    key, f"not sweepable; grid keys must be among {GRID_KEYS}"
                )
            if not isinstance(values, (list, tuple)) or not values:
                raise ConfigError(key, "grid values must be a non-empty list")
            for v in values:
                self.base.replace(**{key: v})  # validates the value

    @property
    def grid_keys(self):
        """Swept parameter names, alphabetical (canonical order)."""
        return tuple(sorted(self.grid))

    def grid_points(self):
        """Parameter dicts in canonical order; one empty dict if no grid."""
        keys = self.grid_keys
        if not keys:
            return [{}]
        combos = itertools.product(*(self.grid[k] for k in keys))
        return [dict(zip(keys, combo)) for combo in combos]

    def cells(self):
        """(grid_index, params, replication, seed) for every run."""
        out = []
        for gi, params in enumerate(self.grid_points()):
            for rep in range(self.replications):
                out.append(
                    (gi, params, rep, derive_seed(self.master_seed, gi, rep))
                )
        return out


@dataclass
class SweepRow:
    """Metrics of one run; ``error`` is set (and metrics NaN) on failure."""

    grid_index: int
    params: dict
    replication: int
    seed: int
    sigma_p: float = math.nan
    predictability: float = math.nan
    gamma_abs: float = math.nan
    hurst_returns: float = math.nan
    hurst_abs: float = math.nan
    w_pair: float = math.nan
    w_ref: float = math.nan
    wall_time_ms: float = math.nan
    error: str = None


METRIC_NAMES = (
    "sigma_p",
    "predictability",
    "gamma_abs",
    "hurst_returns",
    "hurst_abs",
    "w_pair",
    "w_ref",
)


def _run_cell(args):
    """Worker entry: execute one run and reduce it to a SweepRow."""
    base, gi, params, rep, seed, engine, series_path = args
    row = SweepRow(grid_index=gi, params=params, replication=rep, seed=seed)
    start = time.perf_counter()
    try:
        config = base.replace(seed=seed, **params)
        output = run(config, engine=engine)
        if series_path is not None:
            write_series_csv(output, series_path)
        report = build_report(output)
        row.sigma_p = report.sigma_p
        row.predictability = report.predictability
        row.gamma_abs = report.gamma_abs.gamma
        row.hurst_returns = report.dfa_returns.hurst
        row.hurst_abs = report.dfa_abs_returns.hurst
        row.w_pair = report.w_pair
        row.w_ref = report.w_ref
    except Exception as exc:
        row.error = f"{type(exc).__name__}: {exc}"
    row.wall_time_ms = (time.perf_counter() - start) * 1e3
    return row


def execute_sweep(spec: SweepSpec, parallelism=1, engine=None,
                  series_dir=None) -> list:
    """Run every (grid point, replication) cell and return canonical rows.

    Failed runs produce error rows and the sweep continues. With
    ``series_dir`` set, each run also dumps its tick series CSV there.
    """
    if parallelism < 1:
        raise ValueError("parallelism must be >= 1")
    tasks = []
    for gi, params, rep, seed in spec.cells():
        series_path = None
        if series_dir is not None:
            series_path = Path(series_dir) / f"series_g{gi:03d}_r{rep:03d}.csv"
        tasks.append((spec.base, gi, params, rep, seed, engine, series_path))

    if parallelism == 1 or len(tasks) == 1:
        rows = [_run_cell(t) for t in tasks]
    else:
        with concurrent.futures.ProcessPoolExecutor(
            max_workers=parallelism
        ) as pool:
            rows = list(pool.map(_run_cell, tasks))

    for row in rows:
        if row.error is not None:
            log.warning(
                "run failed %s rep=%d seed=%d: %s",
                row.params, row.replication, row.seed, row.error,
            )
        else:
            log.info(
                "run %s rep=%d seed=%d sigma_p=%.6g (%.0f ms)",
                row.params, row.replication, row.seed,
                row.sigma_p, row.wall_time_ms,
            )
    return rows


@dataclass
class AggregateRow:
    """Per-grid-point mean and standard error of every metric."""

    grid_index: int
    params: dict
    n_runs: int
    n_errors: int
    means: dict
    stderrs: dict


def aggregate(rows) -> list:
    """Reduce sweep rows to per-grid-point means and standard errors.

    Error rows are excluded from the statistics and counted. The reduction
    is over values keyed by grid index, so any row ordering aggregates
    identically. Standard errors are NaN with a single valid replication.
    """
    by_point = {}
    for row in rows:
        by_point.setdefault(row.grid_index, []).append(row)

    out = []
    for gi in sorted(by_point):
        group = by_point[gi]
        valid = sorted(
            (r for r in group if r.error is None), key=lambda r: r.replication
        )
        means = {}
        stderrs = {}
        for name in METRIC_NAMES:
            vals = np.array([getattr(r, name) for r in valid])
            vals = vals[~np.isnan(vals)]
            if vals.size == 0:
                means[name] = math.nan
                stderrs[name] = math.nan
            else:
                means[name] = float(vals.mean())
                stderrs[name] = (
                    float(vals.std(ddof=1) / math.sqrt(vals.size))
                    if vals.size > 1
                    else math.nan
                )
        out.append(
            AggregateRow(
                grid_index=gi,
                params=group[0].params,
                n_runs=len(valid),
                n_errors=len(group) - len(valid),
                means=means,
                stderrs=stderrs,
            )
        )
    return out


# ---------------------------------------------------------------------------
# CSV output
# ---------------------------------------------------------------------------

def format_float(x) -> str:
    """Render a float with 9 significant digits ('.' separator, no grouping)."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    return f"{x:.9g}"


def _format_param(value):
    if isinstance(value, float):
        return format_float(value)
    return str(value)


def write_rows_csv(rows, grid_keys, path):
    """Write per-run rows: grid params (alphabetical), then fixed columns."""
    grid_keys = tuple(sorted(grid_keys))
    header = list(grid_keys) + [
        "replication",
        "seed",
        "sigma_p",
        "predictability",
        "gamma_abs",
        "hurst_returns",
        "hurst_abs",
        "w_pair",
        "w_ref",
        "wall_time_ms",
    ]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            cells = [_format_param(row.params[k]) for k in grid_keys]
            cells += [str(row.replication), str(row.seed)]
            cells += [format_float(getattr(row, m)) for m in METRIC_NAMES]
            cells.append(format_float(row.wall_time_ms))
            writer.writerow(cells)


def write_aggregate_csv(aggs, grid_keys, path):
    """Write per-grid-point means and standard errors."""
    grid_keys = tuple(sorted(grid_keys))
    header = list(grid_keys) + ["n_runs", "n_errors"]
    for name in METRIC_NAMES:
        header += [f"{name}_mean", f"{name}_stderr"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for agg in aggs:
            cells = [_format_param(agg.params[k]) for k in grid_keys]
            cells += [str(agg.n_runs), str(agg.n_errors)]
            for name in METRIC_NAMES:
                cells.append(format_float(agg.means[name]))
                cells.append(format_float(agg.stderrs[name]))
            writer.writerow(cells)


def write_series_csv(output, path):
    """Write the tick series of one run.

    Prices are rendered with ``repr`` (shortest round-trip form), so feeding
    the file back through the analyzer reproduces the run's statistics
    exactly.
    """
    ticks = output.ticks
    measured = output.is_measured
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [
                "tick",
                "price",
                "excess_demand",
                "pair_buys",
                "pair_sells",
                "ref_buys",
                "ref_sells",
                "is_measured",
            ]
        )
        for i in range(output.n_ticks):
            writer.writerow(
                [
                    str(i + 1),
                    repr(float(ticks.price[i])),
                    str(int(ticks.excess[i])),
                    str(int(ticks.pair_buys[i])),
                    str(int(ticks.pair_sells[i])),
                    str(int(ticks.ref_buys[i])),
                    str(int(ticks.ref_sells[i])),
                    str(int(measured[i])),
                ]
            )
