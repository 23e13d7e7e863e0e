"""Wall-clock and allocation benchmarks of the attention block variants."""
from __future__ import annotations

import contextlib
import csv
import math
import time
from dataclasses import asdict, dataclass

import numpy as np
from threadpoolctl import threadpool_limits

from .attention import flop_estimate, make_block
from .numerics import Tensor, allocations, kernels, mse, no_grad

CSV_FIELDS = ["variant", "D", "N", "d_model", "heads", "median_ms", "peak_bytes", "flops"]


@dataclass
class BenchPoint:
    variant: str
    D: int
    N: int
    d_model: int
    heads: int
    reps: int
    median_ms: float
    peak_bytes: int
    flops: int
    error: str = ""


@contextlib.contextmanager
def single_thread():
    with threadpool_limits(limits=1):
        yield


def time_forward(variant, D, N, d_model, heads=2, reps=3, backward=False, dtype="float32", seed=0):
    """Median wall time and peak tensor bytes of one block pass on random tokens.

    One warm-up pass is discarded. Allocation failures produce a point with
    ``median_ms = nan`` and the error text instead of raising.
    """
    if reps < 3:
        raise ValueError("reps must be >= 3")
    flops = flop_estimate(variant, D, N, d_model, heads)
    rng = np.random.default_rng(seed)
    try:
        block = make_block(variant, d_model, heads, rng, dtype=dtype)
        tokens = rng.standard_normal((1, D, N, d_model)).astype(dtype)

        def run():
            if backward:
                out = block(Tensor(tokens))
                loss = mse(out, np.zeros(out.shape, dtype=dtype))
                loss.backward()
                for p in block.parameters():
                    p.grad = None
                return out
            with no_grad():
                return block(Tensor(tokens))

        with single_thread():
            run()
            times, peaks = [], []
            for _ in range(reps):
                base = allocations.live
                allocations.reset_peak()
                t0 = time.perf_counter()
                out = run()
                times.append((time.perf_counter() - t0) * 1e3)
                peaks.append(allocations.peak - base)
                del out
    except MemoryError as exc:
        return BenchPoint(variant, D, N, d_model, heads, reps, math.nan, -1, flops, f"MemoryError: {exc}")
    return BenchPoint(variant, D, N, d_model, heads, reps, float(np.median(times)), int(max(peaks)), flops)


def loglog_slope(xs, ys):
    """Least-squares slope of log(y) against log(x)."""
    lx = np.log(np.asarray(xs, dtype=float))
    ly = np.log(np.asarray(ys, dtype=float))
    slope, _ = np.polyfit(lx, ly, 1)
    return float(slope)


def scaling_sweep(variants, n_grid, D=32, d_model=64, heads=2, reps=3, backward=False, dtype="float32"):
    """Time every variant over ``n_grid``; returns (points, {variant: slope})."""
    points, slopes = [], {}
    for v in variants:
        row = [time_forward(v, D, n, d_model, heads, reps, backward, dtype) for n in n_grid]
        points.extend(row)
        ok = [p for p in row if math.isfinite(p.median_ms)]
        slopes[v] = loglog_slope([p.N for p in ok], [p.median_ms for p in ok]) if len(ok) >= 2 else math.nan
    return points, slopes


def write_bench_csv(points, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_FIELDS)
        for p in points:
            d = asdict(p)
            w.writerow([d[k] for k in CSV_FIELDS])


def compare_kernels(rows=4096, cols=128, reps=5, seed=0):
    """Median milliseconds per kernel for each available backend."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((rows, cols))
    gamma = rng.standard_normal(cols)
    beta = rng.standard_normal(cols)
    base = rng.standard_normal(32)
    cands = rng.standard_normal((rows // 8, 32))
    results = {}
    for name in kernels.available_backends():
        k = kernels.get_backend(name)
        y = k.softmax_fwd(x)
        _, xhat, rstd = k.layernorm_fwd(x, gamma, beta, 1e-5)
        cases = {
            "softmax_fwd": lambda: k.softmax_fwd(x),
            "softmax_bwd": lambda: k.softmax_bwd(y, x),
            "layernorm_fwd": lambda: k.layernorm_fwd(x, gamma, beta, 1e-5),
            "layernorm_bwd": lambda: k.layernorm_bwd(x, xhat, rstd, gamma),
            "gelu_fwd": lambda: k.gelu_fwd(x),
            "gelu_bwd": lambda: k.gelu_bwd(x, x),
            "pcc_profile": lambda: k.pcc_profile(base, cands, 1e-12),
        }
        for case, fn in cases.items():
            fn()
            ts = []
            for _ in range(reps):
                t0 = time.perf_counter()
                fn()
                ts.append((time.perf_counter() - t0) * 1e3)
            results[(name, case)] = float(np.median(ts))
    return results
