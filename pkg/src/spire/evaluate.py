"""Centroid-level evaluation: delta-matching, precision/recall/F1 and false-alarm rate."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import label
from scipy.optimize import linear_sum_assignment

from . import io


@dataclass
class Matching:
    pairs: list[tuple[int, int, float]]   # (pred index, gt index, distance)
    num_preds: int
    num_gts: int

    @property
    def tp(self) -> int:
        return len(self.pairs)

    @property
    def fp(self) -> int:
        return self.num_preds - self.tp

    @property
    def fn(self) -> int:
        return self.num_gts - self.tp


@dataclass
class MatchReport:
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float
    fa: float
    num_pixels: int
    per_image: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "precision": self.precision, "recall": self.recall, "f1": self.f1,
            "fa": self.fa, "fa_1e-8": self.fa * 1e8,
            "tp": self.tp, "fp": self.fp, "fn": self.fn,
            "num_pixels": self.num_pixels, "num_images": len(self.per_image),
            "per_image": self.per_image,
        }


def _xy(p) -> tuple[float, float]:
    if hasattr(p, "x"):
        return float(p.x), float(p.y)
    return float(p[0]), float(p[1])


def match_centroids(preds, gts, delta: float = 5.0) -> Matching:
    """One-to-one matching with distance <= delta: maximum cardinality first,
    then minimum total distance."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    p = np.array([_xy(q) for q in preds], dtype=np.float64).reshape(-1, 2)
    g = np.array([_xy(q) for q in gts], dtype=np.float64).reshape(-1, 2)
    if len(p) == 0 or len(g) == 0:
        return Matching([], len(p), len(g))
    dist = np.sqrt(((p[:, None, :] - g[None, :, :]) ** 2).sum(-1))
    allowed = dist <= delta
    if not allowed.any():
        return Matching([], len(p), len(g))
    # each forbidden pair outweighs every feasible total, so cardinality wins first
    big = delta * (min(len(p), len(g)) + 1) + 1.0
    cost = np.where(allowed, dist, big)
    rows, cols = linear_sum_assignment(cost)
    pairs = [(int(r), int(c), float(dist[r, c])) for r, c in zip(rows, cols) if allowed[r, c]]
    return Matching(sorted(pairs), len(p), len(g))


def prf(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    """Precision, recall, F1 with explicit empty-set conventions."""
    if tp + fp == 0:
        precision = 1.0 if tp + fn == 0 else 0.0
    else:
        precision = tp / (tp + fp)
    recall = 1.0 if tp + fn == 0 else tp / (tp + fn)
    f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    return precision, recall, f1


def compute_metrics(matchings, image_sizes, image_ids=None) -> MatchReport:
    """Aggregate per-image matchings; Fa = total FP / total pixels over the set."""
    matchings = list(matchings)
    sizes = list(image_sizes)
    if not matchings:
        raise ValueError("need at least one image")
    if len(sizes) != len(matchings):
        raise ValueError("one image size per matching required")
    ids = list(image_ids) if image_ids is not None else [str(i) for i in range(len(matchings))]
    tp = sum(m.tp for m in matchings)
    fp = sum(m.fp for m in matchings)
    fn = sum(m.fn for m in matchings)
    pixels = int(sum(h * w for h, w in sizes))
    precision, recall, f1 = prf(tp, fp, fn)
    per_image = [
        {"image_id": iid, "tp": m.tp, "fp": m.fp, "fn": m.fn,
         "pairs": [[pi, gi, round(d, 6)] for pi, gi, d in m.pairs]}
        for iid, m in zip(ids, matchings)
    ]
    return MatchReport(tp, fp, fn, precision, recall, f1, fp / pixels, pixels, per_image)


def mask_to_centroids(mask: np.ndarray) -> list[tuple[float, float]]:
    """8-connected components of a binary mask -> mean (x, y) per component, in label order."""
    m = np.asarray(mask)
    if not np.isin(m, (0, 1)).all():
        raise ValueError("mask must be binary")
    labels, n = label(m.astype(bool), structure=np.ones((3, 3), dtype=int))
    out = []
    for k in range(1, n + 1):
        ys, xs = np.nonzero(labels == k)
        out.append((float(xs.mean()), float(ys.mean())))
    return out


def evaluate_dataset(pred_csv, gt_csv, manifest, delta: float = 5.0, config: dict | None = None) -> dict:
    """Score a detections CSV against ground truth; image list and sizes come from the manifest."""
    man = io.read_json(manifest) if not isinstance(manifest, dict) else manifest
    scenes = man["scenes"]
    known = {s["image_id"] for s in scenes}
    preds = io.read_points_csv(pred_csv)
    gts = io.read_points_csv(gt_csv)
    for name, table in (("prediction", preds), ("ground truth", gts)):
        unknown = set(table) - known
        if unknown:
            raise KeyError(f"{name} file references image ids not in manifest: {sorted(unknown)[:5]}")
    matchings, sizes, ids = [], [], []
    for s in sorted(scenes, key=lambda s: s["image_id"]):
        iid = s["image_id"]
        # canonical order so the report is independent of CSV row order
        p = sorted((r[0], r[1]) for r in preds.get(iid, []))
        g = sorted((r[0], r[1]) for r in gts.get(iid, []))
        matchings.append(match_centroids(p, g, delta))
        sizes.append((s["height"], s["width"]))
        ids.append(iid)
    report = compute_metrics(matchings, sizes, ids).to_dict()
    report["config"] = dict(config or {})
    report["config"]["delta"] = delta
    return report
