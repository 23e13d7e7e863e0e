"""Multi-head attention and the Sensor Attention Block with its ablation variants.

Tensors carry arbitrary leading batch axes; token axes are the last two
(``tokens x d_model``). Patch tokens arrive as ``(..., D, N, d_model)``.
"""
from __future__ import annotations

import contextlib
import csv
import math
import threading

import numpy as np

from .numerics import (
    add,
    broadcast_to,
    dropout,
    gelu,
    getitem,
    init_uniform,
    layer_norm,
    linear,
    mac_label,
    matmul,
    mul,
    reshape,
    softmax_rows,
    transpose,
)
from .numerics.tensor import NumericError, Parameter, ShapeError

VARIANTS = ("sensor", "pure_cross", "sensor_only", "channel_independent")

_rec = threading.local()


@contextlib.contextmanager
def record_attention():
    """Collect ``(label, weights)`` pairs from every mha call in the block."""
    records = []
    prev = getattr(_rec, "records", None)
    _rec.records = records
    try:
        yield records
    finally:
        _rec.records = prev


def dump_attention_csv(records, path):
    """Write recorded weights as ``label,batch,head,query,key,weight`` rows."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["label", "batch", "head", "query", "key", "weight"])
        for label, weights in records:
            arr = weights.reshape((-1,) + weights.shape[-3:])
            for b, per_batch in enumerate(arr):
                for h, mat in enumerate(per_batch):
                    for q, row in enumerate(mat):
                        for k, val in enumerate(row):
                            w.writerow([label, b, h, q, k, repr(float(val))])


class MHAParams:
    def __init__(self, d_model, heads, rng, prefix="mha", dtype="float64"):
        if heads < 1 or d_model % heads:
            raise ValueError(f"heads={heads} must divide d_model={d_model}")
        self.d_model = d_model
        self.heads = heads
        self.d_head = d_model // heads
        # Columns h*d_head:(h+1)*d_head of W_Q/W_K/W_V are head h's projection.
        self.W_Q = init_uniform(rng, (d_model, d_model), d_model, f"{prefix}.W_Q", dtype)
        self.W_K = init_uniform(rng, (d_model, d_model), d_model, f"{prefix}.W_K", dtype)
        self.W_V = init_uniform(rng, (d_model, d_model), d_model, f"{prefix}.W_V", dtype)
        self.W_O = init_uniform(rng, (d_model, d_model), d_model, f"{prefix}.W_O", dtype)

    def parameters(self):
        return [self.W_Q, self.W_K, self.W_V, self.W_O]


def _split_heads(x, heads):
    lead, t, d = x.shape[:-2], x.shape[-2], x.shape[-1]
    x = reshape(x, lead + (t, heads, d // heads))
    n = len(lead)
    axes = tuple(range(n)) + (n + 1, n, n + 2)
    return transpose(x, axes)


def _merge_heads(x):
    lead = x.shape[:-3]
    heads, t, dh = x.shape[-3:]
    n = len(lead)
    x = transpose(x, tuple(range(n)) + (n + 1, n, n + 2))
    return reshape(x, lead + (t, heads * dh))


def mha(query, key, value, params, attn_dropout=0.0, rng=None, label="mha"):
    """Scaled dot-product multi-head attention.

    Per head: ``softmax(Q W_Q (K W_K)^T / sqrt(d_head)) V W_V``; heads are
    concatenated and projected by ``W_O``.
    """
    if key.shape[-2] == 0:
        raise ShapeError("attention needs at least one key")
    if key.shape[-2] != value.shape[-2]:
        raise ShapeError(f"key rows {key.shape} != value rows {value.shape}")
    for t in (query, key, value):
        if np.isnan(t.data).any():
            raise NumericError("NaN in attention input")
    with mac_label("projection"):
        q = _split_heads(linear(query, params.W_Q), params.heads)
        k = _split_heads(linear(key, params.W_K), params.heads)
        v = _split_heads(linear(value, params.W_V), params.heads)
    with mac_label("attention"):
        kt = transpose(k, tuple(range(k.ndim - 2)) + (k.ndim - 1, k.ndim - 2))
        scores = mul(matmul(q, kt), 1.0 / math.sqrt(params.d_head))
        weights = softmax_rows(scores)
        records = getattr(_rec, "records", None)
        if records is not None:
            records.append((label, weights.data.copy()))
        weights = dropout(weights, attn_dropout, rng)
        mixed = matmul(weights, v)
    with mac_label("projection"):
        return linear(_merge_heads(mixed), params.W_O)


class StageParams:
    """One attention sublayer plus a two-layer GELU MLP, each with post-norm residual."""

    def __init__(self, d_model, heads, rng, prefix, dtype="float64"):
        self.mha = MHAParams(d_model, heads, rng, f"{prefix}.mha", dtype)
        hidden = 2 * d_model
        self.W1 = init_uniform(rng, (d_model, hidden), d_model, f"{prefix}.mlp.W1", dtype)
        self.b1 = init_uniform(rng, (hidden,), d_model, f"{prefix}.mlp.b1", dtype)
        self.W2 = init_uniform(rng, (hidden, d_model), hidden, f"{prefix}.mlp.W2", dtype)
        self.b2 = init_uniform(rng, (d_model,), hidden, f"{prefix}.mlp.b2", dtype)
        self.ln1_g = Parameter(np.ones(d_model, dtype=dtype), f"{prefix}.ln1.gamma")
        self.ln1_b = Parameter(np.zeros(d_model, dtype=dtype), f"{prefix}.ln1.beta")
        self.ln2_g = Parameter(np.ones(d_model, dtype=dtype), f"{prefix}.ln2.gamma")
        self.ln2_b = Parameter(np.zeros(d_model, dtype=dtype), f"{prefix}.ln2.beta")

    def parameters(self):
        return self.mha.parameters() + [
            self.W1, self.b1, self.W2, self.b2,
            self.ln1_g, self.ln1_b, self.ln2_g, self.ln2_b,
        ]

    def mlp(self, x):
        return linear(gelu(linear(x, self.W1, self.b1)), self.W2, self.b2)


def attend(query, kv, stage, p=0.0, rng=None, label="stage"):
    """``Z = LN(Q + MHA(Q, KV, KV))``; returns ``LN(Z + MLP(Z))``."""
    z = layer_norm(add(query, mha(query, kv, kv, stage.mha, p, rng, label)), stage.ln1_g, stage.ln1_b)
    return layer_norm(add(z, dropout(stage.mlp(z), p, rng)), stage.ln2_g, stage.ln2_b)


def _check_epatches(e):
    if e.ndim < 3:
        raise ShapeError(f"expected (..., D, N, d_model) tokens, got {e.shape}")
    if e.shape[-2] == 0:
        raise ShapeError("no patches (N=0)")


def stage1_compress(epatches, stage, p=0.0, rng=None):
    """Last patch of each variable queries all D*N patches; returns (..., D, d_model)."""
    _check_epatches(epatches)
    lead = epatches.shape[:-3]
    D, N, d = epatches.shape[-3:]
    query = getitem(epatches, (Ellipsis, N - 1, slice(None)))
    kv = reshape(epatches, lead + (D * N, d))
    return attend(query, kv, stage, p, rng, "stage1")


def stage2_expand(epatches, sensor, stage, p=0.0, rng=None):
    """Every patch queries the D sensor vectors; returns (..., D, N, d_model)."""
    _check_epatches(epatches)
    lead = epatches.shape[:-3]
    D, N, d = epatches.shape[-3:]
    if sensor.shape != lead + (D, d):
        raise ShapeError(f"sensor {sensor.shape} does not match tokens {epatches.shape}")
    query = reshape(epatches, lead + (D * N, d))
    out = attend(query, sensor, stage, p, rng, "stage2")
    return reshape(out, lead + (D, N, d))


def pure_cross_attention(epatches, stage, p=0.0, rng=None):
    """Self-attention over all D*N patch tokens jointly."""
    _check_epatches(epatches)
    lead = epatches.shape[:-3]
    D, N, d = epatches.shape[-3:]
    flat = reshape(epatches, lead + (D * N, d))
    return reshape(attend(flat, flat, stage, p, rng, "cross"), lead + (D, N, d))


def within_variable_attention(epatches, stage, p=0.0, rng=None):
    """Self-attention restricted to each variable's own N patches."""
    _check_epatches(epatches)
    return attend(epatches, epatches, stage, p, rng, "within")


class SensorBlock:
    variant = "sensor"

    def __init__(self, d_model, heads, rng, prefix="block", dtype="float64", dropout=0.0):
        self.stage1 = StageParams(d_model, heads, rng, f"{prefix}.stage1", dtype)
        self.stage2 = StageParams(d_model, heads, rng, f"{prefix}.stage2", dtype)
        self.dropout = dropout

    def parameters(self):
        return self.stage1.parameters() + self.stage2.parameters()

    def __call__(self, epatches, rng=None):
        p = self.dropout if rng is not None else 0.0
        sensor = stage1_compress(epatches, self.stage1, p, rng)
        return stage2_expand(epatches, sensor, self.stage2, p, rng)


class PureCrossBlock:
    variant = "pure_cross"

    def __init__(self, d_model, heads, rng, prefix="block", dtype="float64", dropout=0.0):
        self.stage = StageParams(d_model, heads, rng, f"{prefix}.cross", dtype)
        self.dropout = dropout

    def parameters(self):
        return self.stage.parameters()

    def __call__(self, epatches, rng=None):
        p = self.dropout if rng is not None else 0.0
        return pure_cross_attention(epatches, self.stage, p, rng)


class SensorOnlyBlock:
    variant = "sensor_only"

    def __init__(self, d_model, heads, rng, prefix="block", dtype="float64", dropout=0.0):
        self.stage1 = StageParams(d_model, heads, rng, f"{prefix}.stage1", dtype)
        self.dropout = dropout

    def parameters(self):
        return self.stage1.parameters()

    def __call__(self, epatches, rng=None):
        p = self.dropout if rng is not None else 0.0
        sensor = stage1_compress(epatches, self.stage1, p, rng)
        lead = epatches.shape[:-3]
        D, N, d = epatches.shape[-3:]
        return broadcast_to(reshape(sensor, lead + (D, 1, d)), lead + (D, N, d))


class ChannelIndependentBlock:
    variant = "channel_independent"

    def __init__(self, d_model, heads, rng, prefix="block", dtype="float64", dropout=0.0):
        self.stage = StageParams(d_model, heads, rng, f"{prefix}.within", dtype)
        self.dropout = dropout

    def parameters(self):
        return self.stage.parameters()

    def __call__(self, epatches, rng=None):
        p = self.dropout if rng is not None else 0.0
        return within_variable_attention(epatches, self.stage, p, rng)


BLOCKS = {
    "sensor": SensorBlock,
    "pure_cross": PureCrossBlock,
    "sensor_only": SensorOnlyBlock,
    "channel_independent": ChannelIndependentBlock,
}


def make_block(variant, d_model, heads, rng, prefix="block", dtype="float64", dropout=0.0):
    try:
        cls = BLOCKS[variant]
    except KeyError:
        raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}") from None
    return cls(d_model, heads, rng, prefix, dtype, dropout)


def sensor_block(epatches, block, rng=None):
    return block(epatches, rng)


def flop_estimate(variant, D, N, d_model, heads=1, include_projections=False):
    """Multiply-adds of attention scores and value mixing, summed over heads.

    With ``include_projections`` the Q/K/V/O projection matmuls are added.
    The head count cancels (``heads * d_head == d_model``) and is accepted for
    interface symmetry.
    """
    T = D * N

    def pair(q, k):
        # scores q x k x d_model, mix q x k x d_model, projections
        macs = 2 * q * k * d_model
        if include_projections:
            macs += (2 * q + 2 * k) * d_model * d_model
        return macs

    if variant == "sensor":
        return pair(D, T) + pair(T, D)
    if variant == "pure_cross":
        return pair(T, T)
    if variant == "sensor_only":
        return pair(D, T)
    if variant == "channel_independent":
        return D * pair(N, N)
    raise ValueError(f"unknown variant {variant!r}")
