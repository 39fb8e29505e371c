"""Command-line entry point: ``spire <command> [--config F] [--seed N] [--out DIR] [--set k=v ...]``.

Commands write their outputs under ``--out`` and echo the effective config
there as ``config.txt`` (and inside JSON outputs). Exit status: 0 success,
1 invalid config/input, 2 file-system failure.

Ablation summary columns (fixed order)::

    cell,mode,sigma,radius,stride,channel_reorg,reweighting,epochs,
    precision,recall,f1,fa_1e8,tp,fp,fn,params_m,flops_g,train_seconds
"""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import io
from .config import ConfigError, RunConfig
from .dataset import load_split, write_split
from .evaluate import evaluate_dataset
from .infer import detect_from_map, predict_map
from .model import WeightsError, build_model, count_params_flops, load_weights, save_weights
from .prps import MODES, build_supervision_map
from .train import TrainingDiverged, train

log = logging.getLogger("spire")

SUMMARY_COLUMNS = [
    "cell", "mode", "sigma", "radius", "stride", "channel_reorg", "reweighting", "epochs",
    "precision", "recall", "f1", "fa_1e8", "tp", "fp", "fn", "params_m", "flops_g", "train_seconds",
]

ABLATION_AXES = {
    "mode": [{"prps.mode": m} for m in MODES],
    "sigma": [{"prps.sigma": s, "prps.radius": r} for s, r in ((1.0, 3), (2.0, 6), (3.0, 9))],
    "stride": [{"model.stride": s} for s in (2, 4, 8)],
    "components": [
        {"model.enable_channel_reorg": True, "model.enable_reweighting": True},
        {"model.enable_channel_reorg": True, "model.enable_reweighting": False},
        {"model.enable_channel_reorg": False, "model.enable_reweighting": False},
    ],
}


def _echo(cfg: RunConfig, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.txt").write_text(cfg.to_text(), encoding="utf-8")


# ---- commands ---------------------------------------------------------------

def cmd_gen(cfg: RunConfig, out_dir) -> Path:
    cfg.validate()
    out = Path(out_dir)
    knobs, seed = cfg.knobs(), cfg.scene.seed
    echo = cfg.to_dict()
    write_split(out, "train", seed, 0, cfg.scene.train_count, knobs, echo)
    if cfg.scene.test_count:
        write_split(out, "test", seed, cfg.scene.train_count, cfg.scene.test_count, knobs, echo)
    _echo(cfg, out)
    return out


def cmd_targets(cfg: RunConfig, dataset, out_dir, split: str = "test", modes=MODES) -> Path:
    base = cfg.prps_config()
    out = Path(out_dir)
    samples = load_split(Path(dataset) / split)
    for mode in modes:
        pcfg = type(base)(**{**base.__dict__, "mode": mode})
        pcfg.validate()
        mdir = out / split / mode
        mdir.mkdir(parents=True, exist_ok=True)
        for s in samples:
            grid = build_supervision_map(s.image, s.centroids, pcfg)
            io.write_map_raw(mdir / f"{s.image_id}.raw", grid)
            io.write_pgm16(mdir / f"{s.image_id}.pgm", grid)
    _echo(cfg, out)
    return out


def cmd_train(cfg: RunConfig, dataset, out_dir, progress=None) -> dict:
    cfg.validate()
    out = Path(out_dir)
    samples = load_split(Path(dataset) / "train")
    result = train(samples, cfg, progress=progress)
    out.mkdir(parents=True, exist_ok=True)
    save_weights(result.model, out / "weights.bin")
    with open(out / "train_log.csv", "w", newline="", encoding="utf-8") as fh:
        fh.write("epoch,train_loss,val_loss,lr\n")
        for row in result.history:
            fh.write(f"{row['epoch']},{row['train_loss']:.10g},{row['val_loss']:.10g},{row['lr']:.10g}\n")
    _echo(cfg, out)
    return {"best_epoch": result.best_epoch, "best_val": result.best_val,
            "seconds": result.seconds, "epochs": len(result.history)}


def _pad_to_stride(image: np.ndarray, stride: int) -> np.ndarray:
    h, w = image.shape
    ph, pw = -h % stride, -w % stride
    if ph or pw:
        image = np.pad(image, ((0, ph), (0, pw)), mode="edge")
    return image


def cmd_infer(cfg: RunConfig, weights, dataset, out_dir, split: str = "test") -> Path:
    cfg.validate()
    out = Path(out_dir)
    model = load_weights(weights, cfg.hrpe_config())
    icfg = cfg.infer_config()
    rows = []
    for s in sorted(load_split(Path(dataset) / split), key=lambda s: s.image_id):
        padded = _pad_to_stride(s.image, model.cfg.stride)
        grid = predict_map(model, padded)
        for d in detect_from_map(grid, model.cfg.stride, icfg, image_shape=s.image.shape):
            rows.append((s.image_id, d.x, d.y, d.score))
    out.mkdir(parents=True, exist_ok=True)
    io.write_points_csv(out / "detections.csv", rows, with_score=True)
    _echo(cfg, out)
    return out / "detections.csv"


def cmd_eval(cfg: RunConfig, pred_csv, gt_csv, manifest, out_dir) -> dict:
    cfg.validate()
    report = evaluate_dataset(pred_csv, gt_csv, manifest, cfg.eval.delta, cfg.to_dict())
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    io.write_json(out / "report.json", report)
    return report


def cmd_bench(cfg: RunConfig) -> dict:
    cfg.validate()
    b = cfg.bench
    hcfg = cfg.hrpe_config()
    if b.height % hcfg.stride or b.width % hcfg.stride or b.repeats < 1:
        raise ConfigError("bench size must be divisible by the stride and repeats >= 1")
    info = count_params_flops(hcfg, b.height, b.width)
    model = build_model(hcfg, seed=cfg.train.seed)
    x = np.zeros((1, 1, b.height, b.width), np.float32)
    times = []
    for _ in range(b.repeats):
        t0 = time.perf_counter()
        model.forward(x)
        times.append(time.perf_counter() - t0)
    return {"height": b.height, "width": b.width, "stride": hcfg.stride,
            "params": info["params"], "params_m": info["params_m"],
            "flops": info["flops"], "flops_g": info["flops_g"],
            "latency_ms": 1000 * float(np.median(times)), "repeats": b.repeats}


def ablation_cells(cfg: RunConfig) -> list[tuple[str, RunConfig]]:
    axes = [a.strip() for a in cfg.ablate.axes.split(",") if a.strip()]
    unknown = [a for a in axes if a not in ABLATION_AXES]
    if unknown or not axes:
        raise ConfigError(f"ablate.axes must list some of {sorted(ABLATION_AXES)}, got {cfg.ablate.axes!r}")
    cells = []
    for combo in itertools.product(*(ABLATION_AXES[a] for a in axes)):
        cell = cfg.copy()
        for overrides in combo:
            for key, value in overrides.items():
                cell.set(key, str(int(value)) if isinstance(value, bool) else str(value))
        cell.validate()
        m, p = cell.model, cell.prps
        name = (f"mode-{p.mode}_sigma-{p.sigma:g}_stride-{m.stride}"
                f"_reorg-{int(m.enable_channel_reorg)}_se-{int(m.enable_reweighting)}")
        cells.append((name, cell))
    return cells


def cmd_ablate(cfg: RunConfig, dataset, out_dir) -> list[dict]:
    out = Path(out_dir)
    rows = []
    dataset = Path(dataset)
    for name, cell in ablation_cells(cfg):
        cdir = out / "cells" / name
        log.info("ablation cell %s", name)
        stats = cmd_train(cell, dataset, cdir)
        pred = cmd_infer(cell, cdir / "weights.bin", dataset, cdir)
        report = cmd_eval(cell, pred, dataset / "test" / "annotations.csv",
                          dataset / "test" / "manifest.json", cdir)
        counts = count_params_flops(cell.hrpe_config())
        report["params_m"], report["flops_g"] = counts["params_m"], counts["flops_g"]
        report["train"] = stats
        io.write_json(cdir / "report.json", report)
        m, p = cell.model, cell.prps
        rows.append({
            "cell": name, "mode": p.mode, "sigma": p.sigma, "radius": p.radius, "stride": m.stride,
            "channel_reorg": int(m.enable_channel_reorg), "reweighting": int(m.enable_reweighting),
            "epochs": cell.train.epochs, "precision": report["precision"], "recall": report["recall"],
            "f1": report["f1"], "fa_1e8": report["fa_1e-8"], "tp": report["tp"], "fp": report["fp"],
            "fn": report["fn"], "params_m": counts["params_m"], "flops_g": counts["flops_g"],
            "train_seconds": stats["seconds"],
        })
    with open(out / "summary.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=SUMMARY_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: f"{v:.6f}" if isinstance(v, float) else v for k, v in row.items()})
    by_mode = {r["mode"]: r["f1"] for r in rows}
    if "prps" in by_mode and "impulse" in by_mode and by_mode["prps"] < by_mode["impulse"]:
        log.warning("ordering inverted: prps F1 %.4f < impulse F1 %.4f", by_mode["prps"], by_mode["impulse"])
    _echo(cfg, out)
    return rows


# ---- argument handling ------------------------------------------------------

def _common(parser: argparse.ArgumentParser, suppress: bool) -> None:
    d = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", default=d, help="key=value config file")
    parser.add_argument("--seed", type=int, default=d, help="overrides scene.seed and train.seed")
    parser.add_argument("--out", default=d if suppress else "out", help="output directory")
    parser.add_argument("--set", dest="overrides", action="append", default=d if suppress else [],
                        metavar="KEY=VALUE", help="config override, repeatable")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spire", description="Synthetic point-target detection pipeline")
    _common(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text)
        _common(p, suppress=True)
        return p

    add("gen", "generate the train/test dataset")
    p = add("targets", "export supervision maps")
    p.add_argument("--dataset", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--modes", default=",".join(MODES))
    p = add("train", "train a model")
    p.add_argument("--dataset", required=True)
    p = add("infer", "detect targets in a dataset split")
    p.add_argument("--dataset", required=True)
    p.add_argument("--weights", required=True)
    p.add_argument("--split", default="test")
    p = add("eval", "score detections against ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--manifest", required=True)
    add("bench", "parameter/FLOP counts and forward latency")
    p = add("ablate", "train and score an ablation grid")
    p.add_argument("--dataset", required=True)
    return parser


def resolve_config(args) -> RunConfig:
    cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
    for item in args.overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, _, value = item.partition("=")
        cfg.set(key, value)
    if args.seed is not None:
        cfg.scene.seed = args.seed
        cfg.train.seed = args.seed
    cfg.validate()
    return cfg


def run(args) -> object:
    cfg = resolve_config(args)
    out = Path(args.out)
    c = args.command
    if c == "gen":
        return str(cmd_gen(cfg, out))
    if c == "targets":
        modes = [m.strip() for m in args.modes.split(",") if m.strip()]
        bad = [m for m in modes if m not in MODES]
        if bad or not modes:
            raise ConfigError(f"--modes must list some of {MODES}")
        return str(cmd_targets(cfg, args.dataset, out, args.split, modes))
    if c == "train":
        return cmd_train(cfg, args.dataset, out)
    if c == "infer":
        return str(cmd_infer(cfg, args.weights, args.dataset, out, args.split))
    if c == "eval":
        rep = cmd_eval(cfg, args.pred, args.gt, args.manifest, out)
        return {k: rep[k] for k in ("precision", "recall", "f1", "fa", "fa_1e-8", "tp", "fp", "fn")}
    if c == "bench":
        return cmd_bench(cfg)
    if c == "ablate":
        return cmd_ablate(cfg, args.dataset, out)
    raise ConfigError(f"unknown command {c!r}")


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(message)s", stream=sys.stderr)
    args = build_parser().parse_args(argv)
    try:
        result = run(args)
    except (ConfigError, WeightsError, TrainingDiverged, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 2
    print(json.dumps(result, indent=2, sort_keys=True) if not isinstance(result, str) else result)
    return 0


if __name__ == "__main__":
    sys.exit(main())
