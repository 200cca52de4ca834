#!/usr/bin/env python3
"""Benchmark the jitted simulation kernels against the pure-python fallback.

The numba path and the fallback share the same source (the fallback runs the
undecorated .py_func), so this measures compilation payoff only. The fallback
is exercised in a subprocess with SLUNGLOAD_NO_NUMBA=1, since the choice is
made at import time.

Usage: python3 benchmarks/bench_kernels.py [--duration 2.0]
"""

import argparse
import json
import os
import subprocess
import sys
import time

WORKER = r"""
import json, sys, time
import slungload._kernels as k
from slungload import dynamics
from slungload.params import RunConfig
import dataclasses

duration = float(sys.argv[1])
cfg = RunConfig()
cfg.sim = dataclasses.replace(cfg.sim, duration=duration)
cfg.wind = dataclasses.replace(cfg.wind, enabled=False)

# warm-up (triggers jit compilation on the numba path)
warm = RunConfig()
warm.sim = dataclasses.replace(warm.sim, duration=0.05)
warm.wind = dataclasses.replace(warm.wind, enabled=False)
dynamics.simulate(warm)

t0 = time.perf_counter()
res = dynamics.simulate(cfg)
wall = time.perf_counter() - t0
print(json.dumps({
    "numba_disabled": bool(k.NUMBA_DISABLED),
    "sim_seconds": duration,
    "wall_seconds": wall,
    "ticks_per_second": len(res.t) / wall,
    "realtime_factor": duration / wall,
}))
"""


def run_case(disable_numba: bool, duration: float) -> dict:
    env = dict(os.environ)
    if disable_numba:
        env["SLUNGLOAD_NO_NUMBA"] = "1"
    else:
        env.pop("SLUNGLOAD_NO_NUMBA", None)
    out = subprocess.run([sys.executable, "-c", WORKER, str(duration)],
                         env=env, capture_output=True, text=True, check=True)
    return json.loads(out.stdout.strip().splitlines()[-1])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--duration", type=float, default=2.0,
                    help="simulated seconds per case (default 2.0; the "
                         "pure-python path runs ~100x slower)")
    args = ap.parse_args()

    print(f"simulating {args.duration:g} s of the 5-drone world per case\n")
    jit = run_case(False, args.duration)
    print(f"numba kernels      : {jit['wall_seconds']:8.2f} s wall   "
          f"({jit['realtime_factor']:.2f}x realtime)")
    py = run_case(True, args.duration)
    print(f"pure-python kernels: {py['wall_seconds']:8.2f} s wall   "
          f"({py['realtime_factor']:.2f}x realtime)")
    print(f"\nspeedup: {py['wall_seconds'] / jit['wall_seconds']:.1f}x")


if __name__ == "__main__":
    main()
