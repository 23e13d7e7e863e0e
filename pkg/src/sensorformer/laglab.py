"""Patch-level Pearson correlation analysis of cross-variable time lags.

For an ordered pair (i, j) the base patch of variable i is compared with every
patch of variable j; the offset of the best-correlated patch from the base
index is the pair's lag in patches.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .numerics import kernels
from .patching import extract_patches

TIE_TOL = 1e-12


@dataclass
class PccProfile:
    base_variable: int
    base_index: int
    target_variable: int
    pcc: np.ndarray


@dataclass
class LagReport:
    proportions: list
    distances: list
    starts: list
    seed: int
    tensor_ids: list = field(default_factory=list)

    @property
    def n_tensors(self):
        return len(self.proportions)

    @property
    def mean_proportion(self):
        return float(np.mean(self.proportions))

    @property
    def mean_distance(self):
        return float(np.mean(self.distances))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["tensor_id", "proportion", "avg_distance"])
            for k, (p, d) in enumerate(zip(self.proportions, self.distances)):
                w.writerow([k, repr(float(p)), repr(float(d))])


def pearson(a, b):
    """Pearson correlation; 0 when either input is (numerically) constant."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"pearson needs equal-length vectors, got {a.shape} and {b.shape}")
    if a.size < 2:
        raise ValueError("pearson needs at least two samples")
    return float(kernels.pcc_profile(a, b[None, :])[0])


def base_patch_index(N):
    """Middle patch: index 4 when N = 10, so ``N // 2 - 1`` for even N."""
    return N // 2 - 1 if N % 2 == 0 else N // 2


def pcc_profile(patches, i, b, j):
    values = patches.values if hasattr(patches, "values") else np.asarray(patches)
    pcc = kernels.pcc_profile(values[i, b], values[j])
    return PccProfile(i, b, j, pcc)


def best_offset(pcc, base):
    """Offset of the maximum; ties go to the base, then smaller |offset|, then lower index."""
    pcc = np.asarray(pcc)
    top = pcc.max()
    candidates = np.flatnonzero(pcc >= top - TIE_TOL)
    best = min(candidates, key=lambda k: (k != base, abs(k - base), k))
    return int(best) - base


def pair_offsets(window, cfg):
    """Lag offsets (in patches) for every ordered pair i != j of an ``(L, D)`` window."""
    window = np.asarray(window, dtype=float)
    D = window.shape[1]
    if D < 2:
        raise ValueError("lag analysis needs at least two variables")
    patches = extract_patches(window.T, cfg)
    base = base_patch_index(patches.N)
    out = {}
    for i in range(D):
        for j in range(D):
            if i != j:
                out[(i, j)] = best_offset(pcc_profile(patches, i, base, j).pcc, base)
    return out


def lag_proportion(window, cfg):
    offsets = pair_offsets(window, cfg)
    return sum(1 for o in offsets.values() if o != 0) / len(offsets)


def lag_distance(window, cfg):
    offsets = pair_offsets(window, cfg)
    return sum(abs(o) for o in offsets.values()) / len(offsets)


def lag_report(series, cfg, n_tensors=10, seed=0):
    """Both statistics on ``n_tensors`` lookback windows drawn uniformly at random."""
    values = series.values if hasattr(series, "values") and not isinstance(series, np.ndarray) else series
    values = np.asarray(values, dtype=float)
    T = values.shape[0]
    if T < cfg.L:
        raise ValueError(f"series of {T} rows is shorter than L={cfg.L}")
    rng = np.random.default_rng(seed)
    starts = rng.integers(0, T - cfg.L + 1, size=n_tensors)
    props, dists = [], []
    for s in starts:
        offsets = pair_offsets(values[s : s + cfg.L], cfg)
        n = len(offsets)
        props.append(sum(1 for o in offsets.values() if o != 0) / n)
        dists.append(sum(abs(o) for o in offsets.values()) / n)
    return LagReport(props, dists, [int(s) for s in starts], seed, list(range(n_tensors)))
