"""Compare the compiled row kernels with the numpy fallback, plus a block-level timing.

    python benchmarks/bench_kernels.py [--rows 4096] [--cols 128] [--reps 7]

Block timings run the model once per backend by re-importing with
SENSORFORMER_KERNELS set to auto, compiled and python, each in a subprocess so
the choice is clean.
"""
import argparse
import json
import os
import subprocess
import sys

from sensorformer.bench import compare_kernels
from sensorformer.numerics import kernels

BLOCK_SNIPPET = """
import json
from sensorformer.bench import time_forward
from sensorformer.numerics import kernels
pts = {v: time_forward(v, 32, 32, 64, reps=5, backward=True).median_ms for v in ("sensor", "pure_cross")}
print(json.dumps(pts))
"""


def block_timings():
    out = []
    for name in ("auto",) + kernels.available_backends():
        env = dict(os.environ, SENSORFORMER_KERNELS=name)
        res = subprocess.run([sys.executable, "-c", BLOCK_SNIPPET], env=env, capture_output=True, text=True,
                             check=True)
        out.append({"backend": name, **json.loads(res.stdout)})
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, default=4096)
    ap.add_argument("--cols", type=int, default=128)
    ap.add_argument("--reps", type=int, default=7)
    ap.add_argument("--no-blocks", action="store_true", help="skip the forward+backward block timings")
    args = ap.parse_args()

    res = compare_kernels(args.rows, args.cols, args.reps)
    names = sorted({k for _, k in res})
    backends = kernels.available_backends()
    print(f"row kernels on {args.rows}x{args.cols} float64, median ms of {args.reps}")
    print(f"{'kernel':<16}" + "".join(f"{b:>12}" for b in backends) + ("     speedup" if len(backends) > 1 else ""))
    for k in names:
        line = f"{k:<16}" + "".join(f"{res[(b, k)]:>12.3f}" for b in backends)
        if len(backends) > 1:
            line += f"{res[('python', k)] / res[('compiled', k)]:>11.2f}x"
        print(line)
    if not args.no_blocks:
        print("\nforward+backward of one block, D=32 N=32 d_model=64, median ms")
        for row in block_timings():
            print(f"  {row['backend']:<10} sensor {row['sensor']:8.2f}   pure_cross {row['pure_cross']:8.2f}")


if __name__ == "__main__":
    main()
