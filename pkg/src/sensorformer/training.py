"""Losses, metrics, the Adam training loop, evaluation and multi-seed runs."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .data import chronological_split, fit_scaler, window_arrays
from .model import build_model, forward
from .numerics import AdamState, adam_step, mse, no_grad

logger = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    batch_size: int = 32
    lr: float = 1e-4
    seed: int = 0
    report_every: int = 0  # batches between log lines; 0 disables

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs={self.epochs} must be >= 1")
        if self.batch_size < 1:
            raise ValueError(f"batch_size={self.batch_size} must be >= 1")
        if not self.lr > 0:
            raise ValueError(f"lr={self.lr} must be positive")


@dataclass
class EvalMetrics:
    mse: float
    mae: float
    count: int

    def to_dict(self):
        return {"mse": self.mse, "mae": self.mae, "count": self.count}


@dataclass
class Splits:
    """Window arrays for each split; ``scaler`` is the train-fit (mean, std) or None."""

    train: tuple
    val: tuple
    test: tuple
    scaler: tuple | None = None
    names: list = field(default_factory=list)

    def counts(self):
        return tuple(len(s[0]) for s in (self.train, self.val, self.test))


def mse_loss(pred, target):
    return mse(pred, target)


def mse_metric(pred, target):
    d = np.asarray(pred, dtype=np.float64) - np.asarray(target, dtype=np.float64)
    return float(np.mean(d * d))


def mae_metric(pred, target):
    d = np.asarray(pred, dtype=np.float64) - np.asarray(target, dtype=np.float64)
    return float(np.mean(np.abs(d)))


def persistence_baseline(x_his, H):
    """Repeat the last observed row H times; works on (L, D) or (B, L, D)."""
    x = np.asarray(x_his)
    last = x[..., -1:, :]
    return np.repeat(last, H, axis=-2)


def as_arrays(windows):
    """Accept an (X, Y) pair of arrays or a list of WindowSample."""
    if isinstance(windows, tuple) and len(windows) == 2 and isinstance(windows[0], np.ndarray):
        return windows
    if len(windows) == 0:
        raise ValueError("no windows")
    return (
        np.stack([w.x_his for w in windows]),
        np.stack([w.x_future for w in windows]),
    )


def prepare_splits(series, L, H, dataset=None, scale=True):
    """Chronological split, train-fit standardization, stride-1 windows."""
    train, val, test = chronological_split(series, L, H, dataset)
    scaler = fit_scaler(train.values) if scale else None

    def arrays(part):
        v = part.values
        if scaler is not None:
            v = (v - scaler[0]) / scaler[1]
        x, y = window_arrays(v, L, H)
        return np.ascontiguousarray(x), np.ascontiguousarray(y)

    return Splits(arrays(train), arrays(val), arrays(test), scaler, list(series.names))


def predict(model, x, batch_size=256):
    out = []
    with no_grad():
        for s in range(0, len(x), batch_size):
            out.append(forward(model, x[s : s + batch_size]).data)
    if not out:
        return np.zeros((0, model.config.H, x.shape[-1]))
    return np.concatenate(out)


def evaluate(model, windows, scaler=None, batch_size=256):
    """Mean MSE/MAE over all windows; with ``scaler`` the metrics are on the raw scale."""
    x, y = as_arrays(windows)
    pred = predict(model, x, batch_size).astype(np.float64)
    y = y.astype(np.float64)
    if scaler is not None:
        pred = pred * scaler[1] + scaler[0]
        y = y * scaler[1] + scaler[0]
    return EvalMetrics(mse_metric(pred, y), mae_metric(pred, y), len(x))


def evaluate_persistence(windows, H, scaler=None):
    x, y = as_arrays(windows)
    pred = persistence_baseline(x, H).astype(np.float64)
    y = y.astype(np.float64)
    if scaler is not None:
        pred = pred * scaler[1] + scaler[0]
        y = y * scaler[1] + scaler[0]
    return EvalMetrics(mse_metric(pred, y), mae_metric(pred, y), len(x))


def _diagnose(model, epoch, batch):
    norms = {p.name: float(np.linalg.norm(p.data)) for p in model.parameters()}
    worst = sorted(norms.items(), key=lambda kv: -kv[1] if math.isfinite(kv[1]) else -math.inf)[:5]
    bad = [n for n, v in norms.items() if not math.isfinite(v)]
    return f"non-finite loss at epoch {epoch}, batch {batch}; largest norms {worst}; non-finite {bad}"


def train(model, train_windows, val_windows, tcfg, on_epoch=None):
    """Mini-batch Adam on MSE. Returns per-epoch dicts (epoch, train_loss, val_mse, val_mae)."""
    x, y = as_arrays(train_windows)
    if len(x) == 0:
        raise ValueError("empty training split")
    dt = model.config.dtype
    x = x.astype(dt, copy=False)
    y = y.astype(dt, copy=False)
    params = model.parameters()
    state = AdamState(lr=tcfg.lr)
    shuffle_rng = np.random.default_rng([tcfg.seed, 0])
    drop_rng = np.random.default_rng([tcfg.seed, model.config.seed, 1])
    history = []
    for epoch in range(1, tcfg.epochs + 1):
        order = shuffle_rng.permutation(len(x))
        losses = []
        for bi, start in enumerate(range(0, len(x), tcfg.batch_size)):
            idx = order[start : start + tcfg.batch_size]
            loss = mse(forward(model, x[idx], drop_rng), y[idx])
            value = float(loss.data)
            if not math.isfinite(value):
                raise TrainingDiverged(_diagnose(model, epoch, bi))
            loss.backward()
            adam_step(params, state)
            losses.append(value)
            if tcfg.report_every and (bi + 1) % tcfg.report_every == 0:
                logger.info("epoch %d batch %d loss %.6f", epoch, bi + 1, value)
        row = {"epoch": epoch, "train_loss": float(np.mean(losses))}
        if val_windows is not None:
            m = evaluate(model, val_windows)
            row["val_mse"], row["val_mae"] = m.mse, m.mae
        else:
            row["val_mse"] = row["val_mae"] = float("nan")
        logger.info("epoch %d train %.6f val %.6f", epoch, row["train_loss"], row["val_mse"])
        history.append(row)
        if on_epoch is not None:
            on_epoch(row)
    return history


def write_history_csv(history, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "train_loss", "val_mse", "val_mae"])
        for r in history:
            w.writerow([r["epoch"], repr(r["train_loss"]), repr(r["val_mse"]), repr(r["val_mae"])])


def write_predictions_csv(model, windows, path, names=None, max_windows=None):
    """``window_id, step, variable, y_true, y_pred`` rows for external plotting."""
    x, y = as_arrays(windows)
    if max_windows is not None:
        x, y = x[:max_windows], y[:max_windows]
    pred = predict(model, x)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["window_id", "step", "variable", "y_true", "y_pred"])
        for k in range(len(x)):
            for h in range(y.shape[1]):
                for d in range(y.shape[2]):
                    var = names[d] if names else d
                    w.writerow([k, h, var, repr(float(y[k, h, d])), repr(float(pred[k, h, d]))])


def run_once(model_cfg, tcfg, splits):
    """Build, train and test one model. Returns (model, history, test EvalMetrics)."""
    model = build_model(model_cfg)
    history = train(model, splits.train, splits.val, tcfg)
    return model, history, evaluate(model, splits.test)


def multi_seed_run(model_cfg, tcfg, splits, seeds):
    """Train/evaluate once per seed; report mean and population std of each metric."""
    rows = []
    for s in seeds:
        _, _, m = run_once(replace(model_cfg, seed=s), replace(tcfg, seed=s), splits)
        rows.append({"seed": s, "mse": m.mse, "mae": m.mae})
    mses = np.array([r["mse"] for r in rows])
    maes = np.array([r["mae"] for r in rows])
    return {
        "runs": rows,
        "mse_mean": float(mses.mean()),
        "mse_std": float(mses.std()),
        "mae_mean": float(maes.mean()),
        "mae_std": float(maes.std()),
    }


def write_multi_seed_csv(result, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["seed", "mse", "mae"])
        for r in result["runs"]:
            w.writerow([r["seed"], repr(r["mse"]), repr(r["mae"])])
        w.writerow(["mean", repr(result["mse_mean"]), repr(result["mae_mean"])])
        w.writerow(["std", repr(result["mse_std"]), repr(result["mae_std"])])

