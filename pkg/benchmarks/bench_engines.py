#!/usr/bin/env python3
"""Benchmark the compiled tick kernel against the numpy fallback.

Runs the same seeded configs through both engines, verifies the outputs are
bit-identical, and reports ticks/second and the speedup.

Usage::

    python benchmarks/bench_engines.py [--ticks 20000] [--repeats 3]
"""

import argparse
import time

import numpy as np

import hetmarket as hm
from hetmarket import engine


SCENARIOS = {
    "pair_only_m3": dict(ratio_ref=0.0, memory=3),
    "pair_only_m10": dict(ratio_ref=0.0, memory=10),
    "ref_only_zigzag": dict(ratio_ref=1.0, g_max=100),
    "ref_only_wide": dict(ratio_ref=1.0, g_max=1400),
    "mixed": dict(ratio_ref=0.5, memory=3, g_max=600),
}


def time_engine(cfg, name, repeats):
    best = float("inf")
    out = None
    for _ in range(repeats):
        start = time.perf_counter()
        out = hm.run(cfg, engine=name)
        best = min(best, time.perf_counter() - start)
    return best, out


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--ticks", type=int, default=20_000)
    parser.add_argument("--agents", type=int, default=1000)
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args()

    if not engine.have_compiled():
        print("compiled kernel not built; benchmarking the fallback only")

    names = engine.available()
    print(f"{args.ticks} ticks, {args.agents} agents, best of {args.repeats}")
    header = f"{'scenario':18s}" + "".join(f"{n:>16s}" for n in names)
    if len(names) == 2:
        header += f"{'speedup':>10s}"
    print(header)

    for label, params in SCENARIOS.items():
        cfg = hm.MarketConfig(n_agents=args.agents, relax_steps=0,
                              measure_steps=args.ticks, seed=7, **params)
        times = {}
        outputs = {}
        for name in names:
            times[name], outputs[name] = time_engine(cfg, name, args.repeats)
        line = f"{label:18s}"
        for name in names:
            line += f"{args.ticks / times[name]:>14.0f}/s"
        if len(names) == 2:
            a, b = (outputs[n].ticks.price for n in names)
            assert np.array_equal(a, b), f"engines disagree on {label}"
            line += f"{times['python'] / times['compiled']:>9.1f}x"
        print(line)


if __name__ == "__main__":
    main()
