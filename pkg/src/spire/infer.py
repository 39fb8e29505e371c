"""Response map -> sub-pixel centroid detections in image coordinates."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn.functional import maxpool2d_3x3_s1


@dataclass(frozen=True)
class InferConfig:
    tau: float = 0.35
    max_detections: int = 128

    def validate(self) -> None:
        if not 0 <= self.tau < 1:
            raise ValueError(f"tau must lie in [0, 1), got {self.tau}")
        if self.max_detections < 1:
            raise ValueError("max_detections must be >= 1")


@dataclass(frozen=True)
class Detection:
    x: float
    y: float
    score: float      # clamped to [0, 1]
    u0: int           # lattice column of the peak
    v0: int           # lattice row of the peak


def nms_local_max(grid: np.ndarray) -> np.ndarray:
    """Keep cells equal to their 3x3 neighbourhood maximum, zero the rest (plateaus survive)."""
    return np.where(grid == maxpool2d_3x3_s1(grid), grid, 0.0)


def select_candidates(suppressed: np.ndarray, cfg: InferConfig) -> list[tuple[int, int, float]]:
    """``(u0, v0, raw_score)`` above tau, best first, ties row-major, at most N_max."""
    vs, us = np.nonzero(suppressed > cfg.tau)
    scores = suppressed[vs, us]
    # lexsort: last key is primary; vs/us break ties in row-major order
    order = np.lexsort((us, vs, -scores))[:cfg.max_detections]
    return [(int(us[i]), int(vs[i]), float(scores[i])) for i in order]


def subpixel_refine(grid: np.ndarray, u0: int, v0: int, stride: int) -> tuple[float, float]:
    """+-1/s shift along the sign of the central difference; zero on border axes."""
    h, w = grid.shape
    du = dv = 0.0
    if 0 < u0 < w - 1:
        du = float(np.sign(grid[v0, u0 + 1] - grid[v0, u0 - 1])) / stride
    if 0 < v0 < h - 1:
        dv = float(np.sign(grid[v0 + 1, u0] - grid[v0 - 1, u0])) / stride
    return du, dv


def stride_transform(stride: int) -> np.ndarray:
    """Image -> lattice affine map (3x3 homogeneous) for plain striding, no letterbox."""
    return np.array([[1.0 / stride, 0, 0], [0, 1.0 / stride, 0], [0, 0, 1]])


def back_map(u: float, v: float, transform: np.ndarray) -> tuple[float, float]:
    """Apply the inverse of the image->lattice affine ``transform`` (2x3 or 3x3)."""
    t = np.asarray(transform, dtype=np.float64)
    if t.shape == (2, 3):
        t = np.vstack([t, [0.0, 0.0, 1.0]])
    if abs(np.linalg.det(t[:2, :2])) < 1e-12:
        raise ValueError("singular coordinate transform")
    inv = np.linalg.inv(t)[:2]
    x, y = inv @ np.array([u, v, 1.0])
    return float(x), float(y)


def detect_from_map(grid: np.ndarray, stride: int, cfg: InferConfig | None = None,
                    transform: np.ndarray | None = None,
                    image_shape: tuple[int, int] | None = None) -> list[Detection]:
    """Peak extraction on a response map; thresholds use raw values, scores are clamped."""
    cfg = cfg or InferConfig()
    cfg.validate()
    grid = np.asarray(grid, dtype=np.float64)
    t = stride_transform(stride) if transform is None else transform
    if image_shape is None:
        image_shape = (grid.shape[0] * stride, grid.shape[1] * stride)
    h, w = image_shape
    out = []
    for u0, v0, raw in select_candidates(nms_local_max(grid), cfg):
        du, dv = subpixel_refine(grid, u0, v0, stride)
        x, y = back_map(u0 + du, v0 + dv, t)
        x = min(max(x, 0.0), w - 1.0)
        y = min(max(y, 0.0), h - 1.0)
        out.append(Detection(x, y, min(max(raw, 0.0), 1.0), u0, v0))
    return out


def predict_map(model, image: np.ndarray) -> np.ndarray:
    """Eval-mode forward of one H x W image; returns the raw H/s x W/s response."""
    x = np.asarray(image, dtype=np.float32)[None, None]
    return model.forward(x, train=False)[0, 0]


def detect(model, image: np.ndarray, cfg: InferConfig | None = None) -> list[Detection]:
    return detect_from_map(predict_map(model, image), model.cfg.stride, cfg,
                           image_shape=image.shape)
