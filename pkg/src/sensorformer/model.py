"""Sensorformer forecaster: patch embedding, attention blocks, shared linear head."""
from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .attention import VARIANTS, attend, make_block
from .numerics import Parameter, Tensor, add, init_uniform, linear, mul, no_grad, reshape, transpose
from .numerics.tensor import NumericError, ShapeError
from .patching import ConfigError, PatchConfig, PatchEmbedding, extract_patches

CHECKPOINT_MAGIC = b"SFCKPT\x00\x01"
CHECKPOINT_VERSION = 1
_STD_FLOOR = 1e-8


class ChecksumError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    patch: PatchConfig = field(default_factory=PatchConfig)
    H: int = 96
    blocks: int = 2
    heads: int = 2
    variant: str = "sensor"
    dropout: float = 0.1
    normalize_window: bool = True
    seed: int = 0
    dtype: str = "float32"

    def __post_init__(self):
        problems = []
        if self.H < 1:
            problems.append(f"H={self.H} must be >= 1")
        if self.blocks < 1:
            problems.append(f"blocks={self.blocks} must be >= 1")
        if self.heads < 1 or self.patch.d_model % self.heads:
            problems.append(f"heads={self.heads} must divide d_model={self.patch.d_model}")
        if self.variant not in VARIANTS:
            problems.append(f"variant={self.variant!r} not in {VARIANTS}")
        if not 0.0 <= self.dropout < 1.0:
            problems.append(f"dropout={self.dropout} must be in [0, 1)")
        if self.dtype not in ("float32", "float64"):
            problems.append(f"dtype={self.dtype!r} must be float32 or float64")
        if problems:
            raise ConfigError("; ".join(problems))

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["patch"] = PatchConfig(**d["patch"])
        return cls(**d)


@dataclass
class WindowSample:
    x_his: np.ndarray  # (L, D)
    x_future: np.ndarray  # (H, D)
    index: int = 0


class Model:
    def __init__(self, cfg):
        self.config = cfg
        rng = np.random.default_rng(cfg.seed)
        pc = cfg.patch
        self.embedding = PatchEmbedding(pc, rng, cfg.dtype)
        self.blocks = [
            make_block(cfg.variant, pc.d_model, cfg.heads, rng, f"block{i}", cfg.dtype, cfg.dropout)
            for i in range(cfg.blocks)
        ]
        fan_in = pc.N * pc.d_model
        self.W_out = init_uniform(rng, (fan_in, cfg.H), fan_in, "head.W", cfg.dtype)
        self.b_out = init_uniform(rng, (cfg.H,), fan_in, "head.b", cfg.dtype)

    def parameters(self):
        """All parameters in checkpoint order: embedding, blocks in order, head."""
        params = list(self.embedding.parameters())
        for b in self.blocks:
            params.extend(b.parameters())
        params.extend([self.W_out, self.b_out])
        return params

    def num_parameters(self):
        return sum(p.size for p in self.parameters())

    def __call__(self, x_his, rng=None):
        return forward(self, x_his, rng)


def build_model(cfg):
    return Model(cfg)


def _standardize(x):
    mean = x.mean(axis=-2, keepdims=True)
    std = x.std(axis=-2, keepdims=True)
    std = np.where(std > _STD_FLOOR, std, 1.0)
    return (x - mean) / std, mean, std


def _prepare(model, x_his):
    cfg = model.config
    x = np.asarray(x_his, dtype=cfg.dtype)
    if x.ndim not in (2, 3):
        raise ShapeError(f"expected (L, D) or (B, L, D) input, got {x.shape}")
    if x.shape[-2] != cfg.patch.L:
        raise ShapeError(f"lookback length {x.shape[-2]} != configured L={cfg.patch.L}")
    if x.shape[-1] < 1:
        raise ShapeError("input has no variables")
    if not np.isfinite(x).all():
        raise NumericError("non-finite values in lookback window")
    mean = std = None
    if cfg.normalize_window:
        x, mean, std = _standardize(x)
    return x, mean, std


def _head(model, tokens):
    lead = tokens.shape[:-2]
    flat = reshape(tokens, lead + (tokens.shape[-2] * tokens.shape[-1],))
    out = linear(flat, model.W_out, model.b_out)  # (..., D, H)
    nd = out.ndim
    return transpose(out, tuple(range(nd - 2)) + (nd - 1, nd - 2))  # (..., H, D)


def _finish(y, mean, std):
    if mean is None:
        return y
    return add(mul(y, std), mean)


def forward(model, x_his, rng=None):
    """Forecast ``(H, D)`` (or ``(B, H, D)``) from an ``(L, D)`` lookback window.

    ``rng`` enables dropout; leave it None for deterministic inference.
    """
    x, mean, std = _prepare(model, x_his)
    patches = extract_patches(np.swapaxes(x, -1, -2), model.config.patch)
    tokens = model.embedding(patches)
    for block in model.blocks:
        tokens = block(tokens, rng)
    return _finish(_head(model, tokens), mean, std)


def channel_independent_forward(model, x_his, rng=None):
    """Forward pass with attention confined to each variable's own patches.

    Uses the single-stage parameters of a ``pure_cross`` or
    ``channel_independent`` model, so the two arms share weights.
    """
    if model.config.variant not in ("pure_cross", "channel_independent"):
        raise ValueError("channel-independent forward needs single-stage self-attention blocks")
    x, mean, std = _prepare(model, x_his)
    patches = extract_patches(np.swapaxes(x, -1, -2), model.config.patch)
    tokens = model.embedding(patches)
    for block in model.blocks:
        p = block.dropout if rng is not None else 0.0
        tokens = attend(tokens, tokens, block.stage, p, rng, "within")
    return _finish(_head(model, tokens), mean, std)


def _stack(batch):
    xs = [b.x_his if isinstance(b, WindowSample) else b for b in batch]
    shapes = {np.shape(x) for x in xs}
    if len(shapes) > 1:
        raise ShapeError(f"ragged batch: shapes {sorted(shapes)}")
    return np.stack([np.asarray(x) for x in xs])


def predict_batch(model, batch):
    """Inference on a list of WindowSample (or (L, D) arrays); returns (B, H, D)."""
    if len(batch) == 0:
        return np.zeros((0, model.config.H, 0), dtype=model.config.dtype)
    x = _stack(batch)
    with no_grad():
        return forward(model, x).data


# checkpoints: MAGIC | u32 header length | JSON header | raw little-endian arrays
# in Model.parameters() order. The header stores the SHA-256 of the payload.


def save_checkpoint(model, path):
    params = model.parameters()
    payload = b"".join(np.ascontiguousarray(p.data).astype(p.dtype.newbyteorder("<")).tobytes() for p in params)
    header = {
        "version": CHECKPOINT_VERSION,
        "config": model.config.to_dict(),
        "params": [{"name": p.name, "shape": list(p.shape), "dtype": p.dtype.str} for p in params],
        "sha256": hashlib.sha256(payload).hexdigest(),
    }
    raw = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(raw)))
        fh.write(raw)
        fh.write(payload)


def load_checkpoint(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if not blob.startswith(CHECKPOINT_MAGIC):
        raise ChecksumError(f"{path}: not a sensorformer checkpoint")
    off = len(CHECKPOINT_MAGIC)
    try:
        (hlen,) = struct.unpack_from("<I", blob, off)
        header = json.loads(blob[off + 4 : off + 4 + hlen].decode("utf-8"))
    except (struct.error, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ChecksumError(f"{path}: unreadable header ({exc})") from None
    if header.get("version") != CHECKPOINT_VERSION:
        raise ChecksumError(f"{path}: unsupported checkpoint version {header.get('version')}")
    payload = blob[off + 4 + hlen :]
    if hashlib.sha256(payload).hexdigest() != header["sha256"]:
        raise ChecksumError(f"{path}: checksum mismatch, file is corrupt")
    model = Model(ModelConfig.from_dict(header["config"]))
    pos = 0
    for p, spec in zip(model.parameters(), header["params"]):
        dt = np.dtype(spec["dtype"])
        n = int(np.prod(spec["shape"], dtype=np.int64)) * dt.itemsize
        arr = np.frombuffer(payload[pos : pos + n], dtype=dt).reshape(spec["shape"])
        if arr.shape != p.shape or spec["name"] != p.name:
            raise ChecksumError(f"{path}: parameter {spec['name']} does not fit the model")
        p.data[...] = arr
        pos += n
    return model


def with_variant(cfg, variant, **overrides):
    return replace(cfg, variant=variant, **overrides)
