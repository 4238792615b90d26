"""Benchmark the fused game kernels: numba path vs pure-python fallback.

Run ``python benchmarks/kernel_benchmark.py``.  The script times the hot
kernels in the current mode, then re-invokes itself with
``COMBANDIT_DISABLE_NUMBA=1`` to time the fallback, and prints the speedups.
Pass ``--inner`` (used by the self-invocation) to print raw timings only.
"""

import json
import os
import subprocess
import sys
import time

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

import combandit as cb
from combandit import _kernels

CASES = {
    # (k, n, T, reps)
    "uniform k=8 T=1024": ("uniform", 8, 2, 1024, 100),
    "exp3    k=8 T=1024": ("exp3", 8, 2, 1024, 100),
    "exp2    k=4 T=256 ": ("exp2", 4, 2, 256, 100),
    "round_robin k=4 T=4096": ("round_robin", 4, 2, 4096, 50),
}


def run_case(kind, k, n, T, reps):
    action_set = cb.build_multitask(k, n)
    factory = cb.AdversaryFactory(T=T, theorem4=True)
    spec = cb.LearnerSpec(
        kind=kind, baseline="mean" if kind == "exp3" else None)
    # warm-up: trigger JIT compilation outside the timed region
    cb.replicate(spec, factory, action_set, reps=1, seed=0)
    start = time.perf_counter()
    trs = cb.replicate(spec, factory, action_set, reps=reps, seed=1)
    elapsed = time.perf_counter() - start
    rounds = sum(tr.horizon for tr in trs)
    return elapsed, rounds


def inner():
    results = {}
    for label, args in CASES.items():
        elapsed, rounds = run_case(*args)
        results[label] = (elapsed, rounds)
    print(json.dumps({"mode": _kernels.jit_status(), "results": results}))


def main():
    if "--inner" in sys.argv:
        inner()
        return
    timings = {}
    for disable in ("0", "1"):
        env = dict(os.environ, COMBANDIT_DISABLE_NUMBA=disable)
        out = subprocess.run(
            [sys.executable, os.path.abspath(__file__), "--inner"],
            env=env, capture_output=True, text=True, check=True)
        payload = json.loads(out.stdout.strip().splitlines()[-1])
        timings[payload["mode"]] = payload["results"]
    modes = list(timings)
    print(f"{'case':26s} {modes[0]:>12s} {modes[1]:>14s} {'speedup':>9s}  (s per 1e6 rounds)")
    for label in CASES:
        per_round = []
        for mode in modes:
            elapsed, rounds = timings[mode][label]
            per_round.append(elapsed / rounds * 1e6)
        print(f"{label:26s} {per_round[0]:12.3f} {per_round[1]:14.3f} "
              f"{per_round[1] / per_round[0]:8.1f}x")


if __name__ == "__main__":
    main()
