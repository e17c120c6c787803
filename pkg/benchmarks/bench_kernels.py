"""Time the hot kernels under numba and under the numpy fallback.

Each backend runs in its own interpreter because the switch is read at import:

    python benchmarks/bench_kernels.py [--repeat 5] [--steps 60]

Numba timings exclude the first (compiling) call.
"""
from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import timeit


def _cases(steps):
    import numpy as np

    from sarsim import kernels
    from sarsim.sensing import RobotState, SensorSpec, apply_scan
    from sarsim.sim import bundled_scenario, run_scenario

    width = height = 60
    cert = np.zeros(width * height)
    robots = [RobotState(i + 1, (8 + 11 * i, 30), SensorSpec(4.0, 0.1 + 0.05 * i)) for i in range(5)]
    passable = np.ones(30 * 30, dtype=bool)
    passable[30 * 15 + 5 : 30 * 15 + 25] = False
    none = np.zeros(passable.size, dtype=bool)
    edges = np.empty(0, dtype=np.int64)
    cfg = bundled_scenario("general").with_overrides(controller="cooperative", seed=0, steps=steps)
    return {
        "scan_update 60x60, 5 robots": lambda: apply_scan(cert, width, height, robots),
        "astar 30x30 with wall": lambda: kernels.astar(passable, 30, 30, 0, 30 * 30 - 1, none, edges, edges, 0),
        "yen k=5 30x30 with wall": lambda: kernels.yen(passable, 30, 30, 0, 30 * 30 - 1, 5),
        f"cooperative run, {steps} ticks": lambda: run_scenario(cfg),
    }


def child(repeat, steps):
    from sarsim._accel import BACKEND

    out = {}
    for name, fn in _cases(steps).items():
        fn()  # warm-up, includes compilation
        number = 1 if "run" in name else 20
        best = min(timeit.repeat(fn, number=number, repeat=repeat)) / number
        out[name] = best
    print(json.dumps({"backend": BACKEND, "times": out}))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--steps", type=int, default=60)
    ap.add_argument("--child", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args()
    if args.child:
        child(args.repeat, args.steps)
        return
    results = {}
    for flag in ("0", "1"):
        env = dict(os.environ, SARSIM_DISABLE_NUMBA=flag)
        proc = subprocess.run([sys.executable, __file__, "--child", "--repeat", str(args.repeat),
                               "--steps", str(args.steps)], env=env, capture_output=True,
                              text=True, check=True)
        res = json.loads(proc.stdout.strip().splitlines()[-1])
        results[res["backend"]] = res["times"]
    names = list(next(iter(results.values())))
    print(f"{'kernel':34s} {'numba':>12s} {'numpy':>12s} {'speedup':>9s}")
    for name in names:
        a, b = results.get("numba", {}).get(name), results.get("numpy", {}).get(name)
        speed = f"{b / a:8.1f}x" if a and b else "-"
        fa = f"{a * 1e3:10.3f}ms" if a else "-"
        fb = f"{b * 1e3:10.3f}ms" if b else "-"
        print(f"{name:34s} {fa:>12s} {fb:>12s} {speed:>9s}")


if __name__ == "__main__":
    main()
