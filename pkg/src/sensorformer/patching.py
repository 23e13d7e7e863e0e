"""Patching and patch embedding.

Each variable's lookback window is right-padded with ``S`` copies of its last
value and cut into ``N = (L - P) // S + 2`` windows of length ``P`` starting at
``0, S, 2S, ...``. A single linear map shared by all variables and positions
embeds each patch, and a sinusoidal encoding of the patch index is added.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .numerics import Tensor, add, init_uniform, linear
from .numerics.tensor import ShapeError


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PatchConfig:
    L: int = 96
    P: int = 32
    S: int = 8
    d_model: int = 256

    def __post_init__(self):
        problems = []
        if self.L < 1:
            problems.append(f"L={self.L} must be >= 1")
        if not 1 <= self.P <= self.L:
            problems.append(f"P={self.P} must satisfy 1 <= P <= L={self.L}")
        if self.S < 1:
            problems.append(f"S={self.S} must be >= 1")
        if self.d_model < 2 or self.d_model % 2:
            problems.append(f"d_model={self.d_model} must be even and >= 2")
        if problems:
            raise ConfigError("; ".join(problems))

    @property
    def N(self):
        return patch_count(self.L, self.P, self.S)


@dataclass
class PatchSet:
    values: np.ndarray  # (..., D, N, P)

    @property
    def N(self):
        return self.values.shape[-2]


def patch_count(L, P, S):
    if P > L:
        raise ConfigError(f"patch length P={P} exceeds lookback L={L}")
    if S < 1 or P < 1:
        raise ConfigError(f"P={P} and S={S} must be positive")
    return (L - P) // S + 2


def pad_series(x, S):
    """Append ``S`` copies of the last value along the last axis."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] == 0:
        raise ValueError("cannot pad an empty series")
    if S == 0:
        return x.copy()
    tail = np.repeat(x[..., -1:], S, axis=-1)
    return np.concatenate([x, tail], axis=-1)


def extract_patches(series, cfg):
    """Cut a ``(..., D, L)`` array into a ``(..., D, N, P)`` PatchSet."""
    series = np.asarray(series, dtype=float)
    if series.ndim < 2:
        raise ShapeError(f"expected (..., D, L) series, got shape {series.shape}")
    if series.shape[-1] != cfg.L:
        raise ShapeError(f"series length {series.shape[-1]} != L={cfg.L}")
    padded = pad_series(series, cfg.S)
    windows = sliding_window_view(padded, cfg.P, axis=-1)[..., :: cfg.S, :]
    return PatchSet(np.ascontiguousarray(windows[..., : cfg.N, :]))


def positional_encoding(N, d_model):
    if d_model % 2:
        raise ConfigError(f"d_model={d_model} must be even")
    pos = np.arange(N, dtype=float)[:, None]
    freq = np.power(10000.0, -np.arange(0, d_model, 2, dtype=float) / d_model)
    pe = np.empty((N, d_model))
    pe[:, 0::2] = np.sin(pos * freq)
    pe[:, 1::2] = np.cos(pos * freq)
    return pe


class PatchEmbedding:
    """Shared ``P -> d_model`` linear embedding plus positional encoding."""

    def __init__(self, cfg, rng, dtype="float64"):
        self.cfg = cfg
        self.W = init_uniform(rng, (cfg.P, cfg.d_model), cfg.P, "embed.W", dtype)
        self.b = init_uniform(rng, (cfg.d_model,), cfg.P, "embed.b", dtype)
        self.pe = positional_encoding(cfg.N, cfg.d_model).astype(dtype)

    def parameters(self):
        return [self.W, self.b]

    def __call__(self, patches):
        values = patches.values if isinstance(patches, PatchSet) else np.asarray(patches)
        if values.shape[-1] != self.cfg.P or values.shape[-2] != self.cfg.N:
            raise ShapeError(
                f"patches {values.shape} do not match N={self.cfg.N}, P={self.cfg.P}"
            )
        x = Tensor(values.astype(self.W.dtype, copy=False))
        return add(linear(x, self.W, self.b), self.pe)


def embed_patches(patches, embedding):
    return embedding(patches)
