"""CSV ingestion, chronological splits, windowing and a synthetic lagged-causality generator."""
from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import asdict, dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .model import WindowSample

_TIME_HEADERS = {"date", "time", "timestamp", "datetime", "ds"}

# Row boundaries (end of train, end of val, end of test) for the ETT family,
# chosen so that L=96, H=96 windowing yields the published window counts.
NAMED_BOUNDARIES = {
    "etth1": (8736, 11712, 14688),
    "etth2": (8736, 11712, 14688),
    "ettm1": (34656, 46272, 57888),
    "ettm2": (34656, 46272, 57888),
}


class DataError(ValueError):
    pass


@dataclass
class MultivariateSeries:
    names: list
    values: np.ndarray  # (T, D)
    timestamps: list | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2:
            raise DataError(f"values must be 2-D (T, D), got {self.values.shape}")
        if len(self.names) != self.values.shape[1]:
            raise DataError(f"{len(self.names)} names for {self.values.shape[1]} columns")
        if self.timestamps is not None and len(self.timestamps) != self.values.shape[0]:
            raise DataError("timestamp count does not match row count")
        if not np.isfinite(self.values).all():
            raise DataError("series contains non-finite values")

    @property
    def T(self):
        return self.values.shape[0]

    @property
    def D(self):
        return self.values.shape[1]

    def slice(self, start, stop):
        ts = None if self.timestamps is None else self.timestamps[start:stop]
        return MultivariateSeries(list(self.names), self.values[start:stop], ts, dict(self.meta))


def _is_number(s):
    try:
        float(s)
    except ValueError:
        return False
    return True


def load_csv(path):
    """Read a headered CSV; a leading non-numeric or date-named column becomes timestamps."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or not rows[0]:
        raise DataError(f"{path}: empty file")
    header, body = rows[0], [r for r in rows[1:] if r]
    if not body:
        raise DataError(f"{path}: header but no data rows")
    has_time = header[0].strip().lower() in _TIME_HEADERS or not _is_number(body[0][0])
    start = 1 if has_time else 0
    names = [h.strip() for h in header[start:]]
    values = np.empty((len(body), len(names)))
    stamps = [] if has_time else None
    for i, row in enumerate(body):
        lineno = i + 2
        if len(row) != len(header):
            raise DataError(f"{path}: row {lineno} has {len(row)} cells, expected {len(header)}")
        if has_time:
            stamps.append(row[0])
        for j, cell in enumerate(row[start:]):
            try:
                v = float(cell)
            except ValueError:
                raise DataError(
                    f"{path}: row {lineno}, column {names[j]!r}: cannot parse {cell!r}"
                ) from None
            if not math.isfinite(v):
                raise DataError(f"{path}: row {lineno}, column {names[j]!r}: missing or non-finite value")
            values[i, j] = v
    meta = {"name": os.path.splitext(os.path.basename(path))[0]}
    return MultivariateSeries(names, values, stamps, meta)


def save_csv(series, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        if series.timestamps is not None:
            w.writerow(["date"] + list(series.names))
            for ts, row in zip(series.timestamps, series.values):
                w.writerow([ts] + [repr(float(v)) for v in row])
        else:
            w.writerow(list(series.names))
            for row in series.values:
                w.writerow([repr(float(v)) for v in row])


@dataclass(frozen=True)
class SplitSpec:
    """Half-open row ranges of each split view; val/test start L rows early."""

    train: tuple
    val: tuple
    test: tuple


def split_spec(T, L, H, dataset=None):
    key = (dataset or "").lower()
    if key in NAMED_BOUNDARIES:
        b1, b2, b3 = NAMED_BOUNDARIES[key]
        if T < b3:
            raise DataError(f"{dataset} needs at least {b3} rows, got {T}")
    else:
        n_train = int(T * 0.7)
        n_test = int(T * 0.2)
        b1, b2, b3 = n_train, T - n_test, T
    spec = SplitSpec((0, b1), (b1 - L, b2), (b2 - L, b3))
    for name, (a, b) in zip(("train", "val", "test"), (spec.train, spec.val, spec.test)):
        if a < 0 or b - a < L + H:
            raise DataError(f"{name} split rows [{a}, {b}) too short for L={L}, H={H}")
    return spec


def chronological_split(series, L, H, dataset=None):
    """Return (train, val, test) views; ``dataset`` defaults to the series' file name."""
    if dataset is None:
        dataset = series.meta.get("name")
    spec = split_spec(series.T, L, H, dataset)
    return tuple(series.slice(a, b) for a, b in (spec.train, spec.val, spec.test))


def window_count(T, L, H, stride=1):
    return max(0, (T - L - H) // stride + 1)


def window_arrays(values, L, H, stride=1):
    """Stacked lookback/target arrays ``(K, L, D)`` and ``(K, H, D)`` (read-only views)."""
    values = np.asarray(values.values if isinstance(values, MultivariateSeries) else values)
    k = window_count(values.shape[0], L, H, stride)
    if k <= 0:
        raise DataError(f"{values.shape[0]} rows cannot hold a window of L={L}, H={H}")
    win = sliding_window_view(values, L + H, axis=0)[::stride][:k]  # (K, D, L+H)
    win = np.swapaxes(win, 1, 2)
    return win[:, :L], win[:, L:]


def make_windows(series, L, H, stride=1):
    x, y = window_arrays(series, L, H, stride)
    return [WindowSample(x[i], y[i], i * stride) for i in range(len(x))]


def fit_scaler(values):
    """Per-variable mean/std of training rows; zero std maps to 1."""
    values = np.asarray(values)
    mean = values.mean(axis=0)
    std = values.std(axis=0)
    return mean, np.where(std > 1e-12, std, 1.0)


@dataclass(frozen=True)
class LagEdge:
    source: int
    target: int
    delay: int
    gain: float = 1.0
    jitter: int = 0


@dataclass(frozen=True)
class LagSpec:
    edges: tuple = ()
    noise_std: float = 0.0
    jitter_period: int = 96

    def to_dict(self):
        return {
            "edges": [asdict(e) for e in self.edges],
            "noise_std": self.noise_std,
            "jitter_period": self.jitter_period,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(LagEdge(**e) for e in d["edges"]), d["noise_std"], d.get("jitter_period", 96))


def _zero_lag_order(D, edges):
    """Variable order respecting zero-lag edges; raises on a zero-lag cycle."""
    succ = {i: [] for i in range(D)}
    indeg = [0] * D
    for e in edges:
        if e.delay - e.jitter <= 0:
            succ[e.source].append(e.target)
            indeg[e.target] += 1
    order = [i for i in range(D) if indeg[i] == 0]
    for i in order:
        for j in succ[i]:
            indeg[j] -= 1
            if indeg[j] == 0:
                order.append(j)
    if len(order) != D:
        raise DataError("lag spec has a cycle at lag 0")
    return order


def synth_lagged(D, T, lag_spec, seed=0, phi=0.9, ar_std=0.5, period_range=(20.0, 60.0)):
    """Generate a ``T x D`` series whose targets are delayed, scaled copies of their sources.

    Variables with no incoming edge are AR(1) plus a sinusoid of random period
    and phase. Each target is ``sum(gain * x[source, t - delay_t]) + noise``
    where ``delay_t`` is the edge delay plus an integer offset in
    ``[-jitter, jitter]`` redrawn every ``jitter_period`` samples.
    """
    for e in lag_spec.edges:
        if not (0 <= e.source < D and 0 <= e.target < D) or e.source == e.target:
            raise DataError(f"bad edge {e} for D={D}")
        if e.delay < 0 or e.jitter < 0 or e.delay - e.jitter < 0:
            raise DataError(f"edge {e}: delays must stay non-negative")
    order = _zero_lag_order(D, lag_spec.edges)
    rng = np.random.default_rng(seed)
    burn = max([e.delay + e.jitter for e in lag_spec.edges], default=0) + 1
    total = T + burn
    t = np.arange(total, dtype=float)
    x = np.zeros((total, D))
    targets = {e.target for e in lag_spec.edges}
    for i in range(D):
        period = rng.uniform(*period_range)
        phase = rng.uniform(0, 2 * np.pi)
        innov = rng.normal(0.0, ar_std * math.sqrt(1 - phi * phi), size=total)
        if i in targets:
            continue
        ar = np.empty(total)
        ar[0] = rng.normal(0.0, ar_std)
        for k in range(1, total):
            ar[k] = phi * ar[k - 1] + innov[k]
        x[:, i] = np.sin(2 * np.pi * t / period + phase) + ar
    incoming = {j: [e for e in lag_spec.edges if e.target == j] for j in targets}
    offsets = {}
    for e in lag_spec.edges:
        n_seg = total // lag_spec.jitter_period + 1
        seg = rng.integers(-e.jitter, e.jitter + 1, size=n_seg) if e.jitter else np.zeros(n_seg, int)
        offsets[e] = np.repeat(seg, lag_spec.jitter_period)[:total]
    noise = rng.normal(0.0, 1.0, size=(total, D)) * lag_spec.noise_std
    for k in range(total):
        for j in order:
            if j not in targets:
                continue
            acc = 0.0
            for e in incoming[j]:
                src = k - (e.delay + offsets[e][k])
                acc += e.gain * (x[src, e.source] if src >= 0 else 0.0)
            x[k, j] = acc + noise[k, j]
    meta = {"name": "synthetic", "seed": seed, "lag_spec": lag_spec.to_dict()}
    return MultivariateSeries([f"x{i}" for i in range(D)], x[burn:], None, meta)


def write_synthetic(series, path):
    """Write the series CSV plus ``<path>.meta.json`` with the generating lag spec."""
    save_csv(series, path)
    with open(path + ".meta.json", "w", encoding="utf-8") as fh:
        json.dump(series.meta, fh, indent=2, sort_keys=True)


def default_synthetic(T=4000, seed=0, noise_std=0.05, S=8):
    """Four variables: two sources, each driving one target with a 2- and 3-patch delay."""
    spec = LagSpec(
        edges=(LagEdge(0, 2, 2 * S, 1.0), LagEdge(1, 3, 3 * S, 0.8)),
        noise_std=noise_std,
    )
    return synth_lagged(4, T, spec, seed)
