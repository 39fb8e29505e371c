"""Dataset directories: ``<split>/images/*.pgm``, ``<split>/annotations.csv``, ``<split>/manifest.json``."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import io
from .scene import DatasetKnobs, gen_scene, scene_seed


@dataclass
class Sample:
    image_id: str
    image: np.ndarray
    centroids: list[tuple[float, float]]


def image_id(index: int) -> str:
    return f"img_{index:06d}"


def write_split(out_dir, split: str, master_seed: int, start: int, count: int,
                knobs: DatasetKnobs, config: dict | None = None) -> Path:
    root = Path(out_dir) / split
    (root / "images").mkdir(parents=True, exist_ok=True)
    rows, scenes = [], []
    for index in range(start, start + count):
        scene = gen_scene(master_seed, index, knobs)
        iid = image_id(index)
        rel = f"images/{iid}.pgm"
        io.write_pgm16(root / rel, scene.image)
        rows += [(iid, x, y) for x, y in scene.centroids]
        h, w = scene.shape
        scenes.append({"image_id": iid, "file": rel, "index": index,
                       "seed": scene_seed(master_seed, index), "height": h, "width": w,
                       "spec": scene.spec.to_dict()})
    io.write_points_csv(root / "annotations.csv", rows)
    io.write_json(root / "manifest.json", {
        "split": split, "master_seed": master_seed, "config": config or {}, "scenes": scenes,
    })
    return root


def load_split(split_dir) -> list[Sample]:
    """Images are read back from the 16-bit PGMs, i.e. exactly what is on disk."""
    root = Path(split_dir)
    manifest_path = root / "manifest.json"
    ann_path = root / "annotations.csv"
    if not manifest_path.exists():
        raise FileNotFoundError(f"{manifest_path} missing")
    if not ann_path.exists():
        raise FileNotFoundError(f"{ann_path} missing")
    man = io.read_json(manifest_path)
    ann = io.read_points_csv(ann_path)
    out = []
    for s in man["scenes"]:
        img = io.read_pgm16(root / s["file"])
        pts = [(r[0], r[1]) for r in ann.get(s["image_id"], [])]
        out.append(Sample(s["image_id"], img, pts))
    return out
