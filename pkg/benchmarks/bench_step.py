"""Compare the compiled and pure-Python simulator kernels.

    python benchmarks/bench_step.py [--seconds 3] [--robots 4]
"""

import argparse

from rlsoccer import kernel
from rlsoccer.cli import measure_step_rate


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seconds", type=float, default=3.0)
    ap.add_argument("--robots", type=int, default=4)
    args = ap.parse_args()
    rows = []
    if kernel.compiled_step_kernel is not None:
        rows.append(("cython", measure_step_rate(args.seconds, args.robots, use_compiled=True)))
    else:
        print("compiled kernel not built; only the Python fallback is measured")
    rows.append(("python", measure_step_rate(args.seconds, args.robots, use_compiled=False)))
    for name, rate in rows:
        print(f"{name:>8}: {rate:12,.0f} steps/s  ({args.robots} robots, LOW fidelity)")
    if len(rows) == 2:
        print(f" speedup: {rows[0][1] / rows[1][1]:.1f}x")


if __name__ == "__main__":
    main()
