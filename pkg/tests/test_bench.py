import csv
import math

import numpy as np
import pytest

from sensorformer import bench
from sensorformer.attention import flop_estimate


def test_minimal_point():
    p = bench.time_forward("sensor", 3, 4, 8, heads=2, reps=3)
    assert p.reps == 3 and p.median_ms > 0 and p.peak_bytes > 0
    assert p.flops == flop_estimate("sensor", 3, 4, 8, 2)


def test_backward_point():
    p = bench.time_forward("pure_cross", 2, 3, 8, reps=3, backward=True)
    assert math.isfinite(p.median_ms)


def test_reps_floor():
    with pytest.raises(ValueError):
        bench.time_forward("sensor", 2, 2, 4, reps=2)


def test_out_of_memory_is_reported(monkeypatch):
    def boom(*a, **k):
        raise MemoryError("simulated")

    monkeypatch.setattr(bench, "make_block", boom)
    p = bench.time_forward("pure_cross", 2, 2, 4)
    assert math.isnan(p.median_ms) and "simulated" in p.error


def test_slope_of_exact_powers():
    n = [16, 32, 64, 128]
    assert bench.loglog_slope(n, [3.0 * x for x in n]) == pytest.approx(1.0)
    assert bench.loglog_slope(n, [0.1 * x * x for x in n]) == pytest.approx(2.0)


def test_sensor_faster_and_leaner_at_n64():
    s = bench.time_forward("sensor", 32, 64, 64, reps=3)
    p = bench.time_forward("pure_cross", 32, 64, 64, reps=3)
    assert s.median_ms < p.median_ms
    assert s.peak_bytes < p.peak_bytes


def test_sweep_and_csv(tmp_path):
    points, slopes = bench.scaling_sweep(["sensor", "sensor_only"], [2, 4], D=2, d_model=8)
    assert len(points) == 4 and set(slopes) == {"sensor", "sensor_only"}
    path = tmp_path / "b.csv"
    bench.write_bench_csv(points, path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["variant", "D", "N", "d_model", "heads", "median_ms", "peak_bytes", "flops"]
    assert len(rows) == 5


def test_compare_kernels():
    res = bench.compare_kernels(rows=64, cols=16, reps=3)
    backends = {b for b, _ in res}
    assert "python" in backends
    assert all(v >= 0 for v in res.values())
    assert {k for _, k in res} >= {"softmax_fwd", "layernorm_bwd", "pcc_profile"}
