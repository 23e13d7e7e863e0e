"""Command-line entry point: ``sensorformer <train|eval|lag|bench|synth|sweep>``.

Settings come from built-in defaults, then an optional flat ``key = value``
config file (``--config``), then ``--key value`` flags. Every run writes into
``<out>/<command>-<confighash>-s<seed>/``; ``<out>`` defaults to
``$SENSORFORMER_OUT`` or ``./runs``.
"""
from __future__ import annotations

import argparse
import datetime
import hashlib
import json
import logging
import os
import sys

from . import bench, data, laglab
from .model import ChecksumError, ModelConfig, build_model, load_checkpoint, save_checkpoint
from .patching import ConfigError, PatchConfig
from .training import (
    TrainConfig,
    evaluate,
    evaluate_persistence,
    prepare_splits,
    train,
    write_history_csv,
    write_predictions_csv,
)

log = logging.getLogger("sensorformer")

DEFAULTS = {
    "data": "",
    "dataset": "",
    "L": 96,
    "P": 32,
    "S": 8,
    "d_model": 256,
    "H": 96,
    "blocks": 2,
    "heads": 2,
    "variant": "sensor",
    "dropout": 0.1,
    "normalize_window": True,
    "dtype": "float32",
    "seed": 0,
    "epochs": 10,
    "batch_size": 32,
    "lr": 1e-4,
    "scale": True,
    "raw_scale": False,
    "checkpoint": "",
    "split": "test",
    "n_tensors": 10,
    "variants": "sensor,pure_cross",
    "n_grid": "16,32,64,128",
    "D": 32,
    "reps": 3,
    "backward": False,
    "kernels": False,
    "T": 4000,
    "noise": 0.05,
    "edges": "0:2:16:1.0,1:3:24:0.8",
    "jitter": 0,
    "axes": "P,S,d_model",
    "P_grid": "8,16,32,64",
    "S_grid": "8,16,32,64",
    "d_model_grid": "64,128,256,512",
    "predictions": 0,
}

COMMAND_KEYS = {
    "train": ["data", "dataset", "L", "P", "S", "d_model", "H", "blocks", "heads", "variant", "dropout",
              "normalize_window", "dtype", "seed", "epochs", "batch_size", "lr", "scale", "raw_scale",
              "predictions"],
    "eval": ["data", "dataset", "checkpoint", "split", "H", "scale", "raw_scale", "seed"],
    "lag": ["data", "L", "P", "S", "n_tensors", "seed"],
    "bench": ["variants", "n_grid", "D", "d_model", "heads", "reps", "backward", "dtype", "kernels", "seed"],
    "synth": ["D", "T", "seed", "noise", "edges", "jitter"],
    "sweep": ["data", "dataset", "L", "P", "S", "d_model", "H", "blocks", "heads", "variant", "dropout",
              "normalize_window", "dtype", "seed", "epochs", "batch_size", "lr", "scale", "axes",
              "P_grid", "S_grid", "d_model_grid"],
}


class UsageError(Exception):
    pass


def _coerce(key, raw):
    default = DEFAULTS[key]
    if isinstance(raw, str):
        raw = raw.strip()
        if default is None:
            return raw
        if isinstance(default, bool):
            low = raw.lower()
            if low not in ("1", "0", "true", "false", "yes", "no", "on", "off"):
                raise UsageError(f"{key}: expected a boolean, got {raw!r}")
            return low in ("1", "true", "yes", "on")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
    return raw


def read_config_file(path):
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key = value")
            k, v = (s.strip() for s in line.split("=", 1))
            if k not in DEFAULTS:
                raise UsageError(f"{path}:{lineno}: unknown key {k!r}")
            out[k] = _coerce(k, v)
    return out


def resolve(command, args):
    cfg = {k: DEFAULTS[k] for k in COMMAND_KEYS[command]}
    if command == "eval":
        cfg["H"] = None  # only checked against the checkpoint when given
    if args.config:
        for k, v in read_config_file(args.config).items():
            if k in cfg:
                cfg[k] = v
    for k in COMMAND_KEYS[command]:
        v = getattr(args, k, None)
        if v is not None:
            cfg[k] = _coerce(k, v)
    return cfg


def config_hash(cfg):
    text = "\n".join(f"{k}={cfg[k]}" for k in sorted(cfg))
    return hashlib.sha256(text.encode()).hexdigest()[:10]


def run_dir(command, cfg, out):
    base = out or os.environ.get("SENSORFORMER_OUT") or "runs"
    path = os.path.join(base, f"{command}-{config_hash(cfg)}-s{cfg.get('seed', 0)}")
    os.makedirs(path, exist_ok=True)
    with open(os.path.join(path, "run.txt"), "w", encoding="utf-8") as fh:
        fh.write(f"# started {datetime.datetime.now().isoformat(timespec='seconds')}\n")
        for k in sorted(cfg):
            fh.write(f"{k} = {cfg[k]}\n")
    return path


def _ints(text):
    return [int(t) for t in str(text).split(",") if t.strip()]


def model_config(cfg):
    patch = PatchConfig(cfg["L"], cfg["P"], cfg["S"], cfg["d_model"])
    return ModelConfig(
        patch=patch, H=cfg["H"], blocks=cfg["blocks"], heads=cfg["heads"], variant=cfg["variant"],
        dropout=cfg["dropout"], normalize_window=cfg["normalize_window"], seed=cfg["seed"],
        dtype=cfg["dtype"],
    )


def train_config(cfg):
    return TrainConfig(epochs=cfg["epochs"], batch_size=cfg["batch_size"], lr=cfg["lr"], seed=cfg["seed"])


def _load(cfg):
    if not cfg["data"]:
        raise UsageError("--data is required")
    if not os.path.exists(cfg["data"]):
        raise UsageError(f"dataset not found: {cfg['data']}")
    return data.load_csv(cfg["data"])


def _splits(cfg, series, L, H):
    return prepare_splits(series, L, H, cfg.get("dataset") or None, scale=cfg["scale"])


def _metric_record(m, persistence=None):
    rec = {"mse": m.mse, "mae": m.mae, "count": m.count}
    if persistence is not None:
        rec["persistence_mse"] = persistence.mse
        rec["persistence_mae"] = persistence.mae
    return rec


def cmd_train(cfg, out):
    mcfg = model_config(cfg)
    series = _load(cfg)
    splits = _splits(cfg, series, mcfg.patch.L, mcfg.H)
    path = run_dir("train", cfg, out)
    model = build_model(mcfg)
    history = train(model, splits.train, splits.val, train_config(cfg))
    scaler = splits.scaler if cfg["raw_scale"] else None
    metrics = evaluate(model, splits.test, scaler)
    base = evaluate_persistence(splits.test, mcfg.H, scaler)
    save_checkpoint(model, os.path.join(path, "model.ckpt"))
    write_history_csv(history, os.path.join(path, "history.csv"))
    with open(os.path.join(path, "metrics.json"), "w") as fh:
        fh.write(json.dumps(_metric_record(metrics, base), sort_keys=True) + "\n")
    if cfg["predictions"]:
        write_predictions_csv(model, splits.test, os.path.join(path, "predictions.csv"),
                              splits.names, cfg["predictions"])
    print(json.dumps({"run_dir": path, **_metric_record(metrics, base)}, sort_keys=True))
    return 0


def cmd_eval(cfg, out):
    if not cfg["checkpoint"]:
        raise UsageError("--checkpoint is required")
    model = load_checkpoint(cfg["checkpoint"])
    mcfg = model.config
    if cfg["H"] is not None and cfg["H"] != mcfg.H:
        raise UsageError(f"horizon H={cfg['H']} does not match checkpoint horizon {mcfg.H}")
    series = _load(cfg)
    splits = _splits(cfg, series, mcfg.patch.L, mcfg.H)
    part = {"train": splits.train, "val": splits.val, "test": splits.test}.get(cfg["split"])
    if part is None:
        raise UsageError(f"unknown split {cfg['split']!r}")
    m = evaluate(model, part, splits.scaler if cfg["raw_scale"] else None)
    print(json.dumps(_metric_record(m), sort_keys=True))
    return 0


def cmd_lag(cfg, out):
    series = _load(cfg)
    pcfg = PatchConfig(cfg["L"], cfg["P"], cfg["S"], 2)
    report = laglab.lag_report(series, pcfg, cfg["n_tensors"], cfg["seed"])
    path = run_dir("lag", cfg, out)
    report.to_csv(os.path.join(path, "lag.csv"))
    print(json.dumps({"run_dir": path, "mean_proportion": report.mean_proportion,
                      "mean_distance": report.mean_distance, "n_tensors": report.n_tensors}))
    return 0


def cmd_bench(cfg, out):
    path = run_dir("bench", cfg, out)
    if cfg["kernels"]:
        res = bench.compare_kernels()
        with open(os.path.join(path, "kernels.csv"), "w") as fh:
            fh.write("backend,kernel,median_ms\n")
            for (backend, name), ms in sorted(res.items()):
                fh.write(f"{backend},{name},{ms!r}\n")
        print(json.dumps({"run_dir": path, "kernels": {f"{b}/{n}": v for (b, n), v in sorted(res.items())}}))
        return 0
    variants = [v.strip() for v in cfg["variants"].split(",") if v.strip()]
    points, slopes = bench.scaling_sweep(
        variants, _ints(cfg["n_grid"]), cfg["D"], cfg["d_model"], cfg["heads"], cfg["reps"],
        cfg["backward"], cfg["dtype"],
    )
    bench.write_bench_csv(points, os.path.join(path, "bench.csv"))
    print(json.dumps({"run_dir": path, "slopes": slopes}))
    return 0


def parse_edges(text, jitter=0):
    edges = []
    for item in str(text).split(","):
        if not item.strip():
            continue
        parts = item.split(":")
        if len(parts) not in (3, 4):
            raise UsageError(f"edge {item!r} must be source:target:delay[:gain]")
        gain = float(parts[3]) if len(parts) == 4 else 1.0
        edges.append(data.LagEdge(int(parts[0]), int(parts[1]), int(parts[2]), gain, jitter))
    return tuple(edges)


def cmd_synth(cfg, out):
    spec = data.LagSpec(parse_edges(cfg["edges"], cfg["jitter"]), cfg["noise"])
    series = data.synth_lagged(cfg["D"], cfg["T"], spec, cfg["seed"])
    path = run_dir("synth", cfg, out)
    target = os.path.join(path, "synthetic.csv")
    data.write_synthetic(series, target)
    print(json.dumps({"run_dir": path, "csv": target, "meta": target + ".meta.json"}))
    return 0


def sweep_cells(cfg):
    """(axis, value, overrides) for each one-at-a-time grid cell."""
    grids = {"P": _ints(cfg["P_grid"]), "S": _ints(cfg["S_grid"]), "d_model": _ints(cfg["d_model_grid"])}
    cells = []
    for axis in [a.strip() for a in cfg["axes"].split(",") if a.strip()]:
        if axis not in grids:
            raise UsageError(f"unknown sweep axis {axis!r}")
        for value in grids[axis]:
            cells.append((axis, value, {axis: value}))
    return cells


def cmd_sweep(cfg, out):
    series = _load(cfg)
    path = run_dir("sweep", cfg, out)
    rows = []
    for axis, value, override in sweep_cells(cfg):
        cell = dict(cfg, **override)
        mcfg = model_config(cell)
        splits = _splits(cell, series, mcfg.patch.L, mcfg.H)
        model = build_model(mcfg)
        train(model, splits.train, splits.val, train_config(cell))
        m = evaluate(model, splits.test)
        rows.append((axis, value, cell["P"], cell["S"], cell["d_model"], mcfg.patch.N, m.mse, m.mae))
        log.info("sweep %s=%s mse=%.5f", axis, value, m.mse)
    with open(os.path.join(path, "sweep.csv"), "w") as fh:
        fh.write("axis,value,P,S,d_model,N,mse,mae\n")
        for r in rows:
            fh.write(",".join(str(x) if not isinstance(x, float) else repr(x) for x in r) + "\n")
    print(json.dumps({"run_dir": path, "cells": len(rows)}))
    return 0


COMMANDS = {
    "train": (cmd_train, "train a model, write checkpoint, history and test metrics"),
    "eval": (cmd_eval, "evaluate a checkpoint on one split"),
    "lag": (cmd_lag, "patch-level PCC lag statistics over random windows"),
    "bench": (cmd_bench, "attention-variant timing/allocation sweep or kernel comparison"),
    "synth": (cmd_synth, "write a synthetic lagged dataset and its metadata"),
    "sweep": (cmd_sweep, "patch length / stride / d_model sensitivity grid"),
}


def build_parser():
    parser = argparse.ArgumentParser(prog="sensorformer", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="flat key = value config file")
        p.add_argument("--out", help="output root (default $SENSORFORMER_OUT or ./runs)")
        for key in COMMAND_KEYS[name]:
            default = DEFAULTS[key]
            p.add_argument(f"--{key}", default=None, metavar=type(default).__name__.upper(),
                           help=f"default: {default}")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    fn = COMMANDS[args.command][0]
    try:
        cfg = resolve(args.command, args)
        return fn(cfg, args.out)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"sensorformer {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, ChecksumError, data.DataError, ValueError) as exc:
        print(f"sensorformer {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
