"""Mini-batch Adam training against on-the-fly supervision maps."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .config import RunConfig
from .dataset import Sample
from .model import Hrpe, build_model, weights_from_bytes, weights_to_bytes
from .nn.functional import mse_loss
from .nn.optim import AdamState, ReduceLROnPlateau, adam_step
from .prps import build_supervision_map
from .rng import Rng, splitmix64

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainResult:
    model: Hrpe
    history: list[dict] = field(default_factory=list)
    best_epoch: int = 0
    best_val: float = math.inf
    seconds: float = 0.0


def split_train_val(samples: list[Sample], val_fraction: float):
    """Last ``val_fraction`` of the samples by index are held out."""
    n_val = int(round(len(samples) * val_fraction))
    if n_val == 0 or n_val >= len(samples):
        return samples, []
    return samples[:-n_val], samples[-n_val:]


def _flip(sample: Sample, flip_x: bool, flip_y: bool) -> tuple[np.ndarray, list]:
    img, pts = sample.image, sample.centroids
    h, w = img.shape
    if flip_x:
        img = img[:, ::-1]
        pts = [(w - 1 - x, y) for x, y in pts]
    if flip_y:
        img = img[::-1, :]
        pts = [(x, h - 1 - y) for x, y in pts]
    return np.ascontiguousarray(img), pts


def make_batch(items, prps_cfg):
    images = np.stack([img for img, _ in items]).astype(np.float32)[:, None]
    targets = np.stack([build_supervision_map(img, pts, prps_cfg) for img, pts in items])
    return images, targets.astype(np.float32)[:, None]


def evaluate_loss(model: Hrpe, samples: list[Sample], prps_cfg, batch_size: int) -> float:
    total, count = 0.0, 0
    for i in range(0, len(samples), batch_size):
        chunk = samples[i:i + batch_size]
        x, y = make_batch([(s.image, s.centroids) for s in chunk], prps_cfg)
        loss, _ = mse_loss(model.forward(x, train=False), y)
        total += loss * len(chunk)
        count += len(chunk)
    return total / max(count, 1)


def train(samples: list[Sample], cfg: RunConfig, progress=None) -> TrainResult:
    """Train from scratch; returns the model restored to its best-validation weights.

    Without a validation split the training loss drives checkpointing and the
    learning-rate schedule.
    """
    t0 = time.perf_counter()
    tc = cfg.train
    prps_cfg = cfg.prps_config()
    model = build_model(cfg.hrpe_config(), seed=tc.seed)
    adam = AdamState.for_store(model.store, lr=tc.lr)
    sched = ReduceLROnPlateau(adam, factor=tc.lr_factor, patience=tc.lr_patience)
    shuffle_rng = Rng(splitmix64(tc.seed))
    train_set, val_set = split_train_val(samples, tc.val_fraction)

    result = TrainResult(model)
    best_blob = weights_to_bytes(model)
    for epoch in range(1, tc.epochs + 1):
        lr = adam.lr
        order = shuffle_rng.permutation(len(train_set))
        running, seen = 0.0, 0
        for start in range(0, len(order), tc.batch_size):
            items = []
            for idx in order[start:start + tc.batch_size]:
                s = train_set[idx]
                if tc.augment_flip:
                    items.append(_flip(s, shuffle_rng.uniform() < 0.5, shuffle_rng.uniform() < 0.5))
                else:
                    items.append((s.image, s.centroids))
            x, y = make_batch(items, prps_cfg)
            model.store.zero_grad()
            pred = model.forward(x, train=True)
            loss, grad = mse_loss(pred, y)
            if not math.isfinite(loss):
                raise TrainingDiverged(f"loss became {loss} at epoch {epoch}, batch {start // tc.batch_size} "
                                       f"(lr {adam.lr:g})")
            model.backward(grad)
            adam_step(model.store, adam)
            running += loss * len(items)
            seen += len(items)
        train_loss = running / seen
        val_loss = evaluate_loss(model, val_set, prps_cfg, tc.batch_size) if val_set else train_loss
        if not math.isfinite(val_loss):
            raise TrainingDiverged(f"validation loss became {val_loss} at epoch {epoch}")
        if val_loss < result.best_val:
            result.best_val, result.best_epoch = val_loss, epoch
            best_blob = weights_to_bytes(model)
        sched.step(val_loss)
        row = {"epoch": epoch, "train_loss": train_loss, "val_loss": val_loss, "lr": lr}
        result.history.append(row)
        log.info("epoch %d train %.6f val %.6f lr %g", epoch, train_loss, val_loss, lr)
        if progress:
            progress(row)

    _restore(model, best_blob)
    result.seconds = time.perf_counter() - t0
    return result


def _restore(model: Hrpe, blob: bytes) -> None:
    best = weights_from_bytes(blob, model.cfg)
    for name, p in best.store.items():
        model.store[name][...] = p
    for name, b in best.buffers.items():
        model.buffers[name][...] = b
