"""Point annotations -> probabilistic response maps on the stride-s lattice.

Per target: refine the annotation to the brightest nearby pixel, map it to
the lattice, build a unit-peak truncated Gaussian, modulate it by the
min-max normalised image patch around the refined peak, renormalise, and
stamp it into the map with an element-wise maximum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

MODES = ("prps", "impulse", "gaussian")


@dataclass(frozen=True)
class PrpsConfig:
    sigma: float = 2.0
    radius: int = 6
    stride: int = 4
    mode: str = "prps"
    refine_radius: int = 4
    free_radius: bool = False   # allow radius != 3*sigma (scale ablations only)

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if self.radius < 0 or self.refine_radius < 0 or self.stride < 1:
            raise ValueError("radius, refine_radius and stride must be non-negative / positive")
        if not self.free_radius and self.radius != round(3 * self.sigma):
            raise ValueError(f"radius {self.radius} != 3*sigma ({3 * self.sigma}); "
                             f"set free_radius to override")

    @classmethod
    def for_sigma(cls, sigma: float, **kwargs) -> "PrpsConfig":
        return cls(sigma=sigma, radius=int(round(3 * sigma)), **kwargs)


def lattice_shape(height: int, width: int, stride: int) -> tuple[int, int]:
    return height // stride, width // stride


def map_centroid_to_lattice(x: float, y: float, stride: int, lat_w: int, lat_h: int) -> tuple[int, int]:
    """``floor(x/s + 0.5), floor(y/s + 0.5)`` clamped to the lattice."""
    u = math.floor(x / stride + 0.5)
    v = math.floor(y / stride + 0.5)
    return min(max(u, 0), lat_w - 1), min(max(v, 0), lat_h - 1)


def refine_to_peak(image: np.ndarray, x: float, y: float, refine_radius: int) -> tuple[int, int]:
    """Brightest pixel in the window around ``round(x), round(y)``; ties go to the
    smallest row, then smallest column."""
    h, w = image.shape
    cx = min(max(int(math.floor(x + 0.5)), 0), w - 1)
    cy = min(max(int(math.floor(y + 0.5)), 0), h - 1)
    x0, x1 = max(0, cx - refine_radius), min(w, cx + refine_radius + 1)
    y0, y1 = max(0, cy - refine_radius), min(h, cy + refine_radius + 1)
    window = image[y0:y1, x0:x1]
    iy, ix = np.unravel_index(int(np.argmax(window)), window.shape)
    return x0 + int(ix), y0 + int(iy)


def gaussian_kernel(sigma: float, radius: int) -> np.ndarray:
    """Unit-peak (unnormalised) Gaussian on a (2r+1)^2 support."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    d = np.arange(-radius, radius + 1, dtype=np.float64)
    return np.exp(-(d[:, None] ** 2 + d[None, :] ** 2) / (2.0 * sigma * sigma))


def minmax_norm(a: np.ndarray) -> np.ndarray:
    lo, hi = float(a.min()), float(a.max())
    if hi == lo:
        return np.zeros_like(a) if hi == 0 else np.ones_like(a)
    return (a - lo) / (hi - lo)


def extract_contrast_patch(image: np.ndarray, x: int, y: int, radius: int) -> np.ndarray:
    """Original-resolution (2r+1)^2 window at ``(x, y)``, clamp-to-edge, min-max normalised.

    A flat window yields all ones.
    """
    h, w = image.shape
    ys = np.clip(np.arange(y - radius, y + radius + 1), 0, h - 1)
    xs = np.clip(np.arange(x - radius, x + radius + 1), 0, w - 1)
    patch = image[np.ix_(ys, xs)].astype(np.float64)
    if patch.max() == patch.min():
        return np.ones_like(patch)
    return minmax_norm(patch)


def compose_response(gauss: np.ndarray, contrast: np.ndarray) -> np.ndarray:
    if gauss.shape != contrast.shape:
        raise ValueError(f"kernel {gauss.shape} and patch {contrast.shape} differ in shape")
    return minmax_norm(gauss * contrast)


def aggregate_targets(responses, lat_h: int, lat_w: int) -> np.ndarray:
    """Element-wise max of ``(response, (u, v))`` stamps; supports cropped at borders."""
    out = np.zeros((lat_h, lat_w), dtype=np.float64)
    for resp, (u, v) in responses:
        r = resp.shape[0] // 2
        v0, v1 = max(0, v - r), min(lat_h, v + r + 1)
        u0, u1 = max(0, u - r), min(lat_w, u + r + 1)
        if v0 >= v1 or u0 >= u1:
            continue
        sub = resp[v0 - (v - r):v1 - (v - r), u0 - (u - r):u1 - (u - r)]
        np.maximum(out[v0:v1, u0:u1], sub, out=out[v0:v1, u0:u1])
    return out


def target_response(image: np.ndarray, x: float, y: float, cfg: PrpsConfig):
    """Per-target ``(H_k, (u, v))`` for the configured mode."""
    lat_h, lat_w = lattice_shape(*image.shape, cfg.stride)
    if cfg.mode == "impulse":
        u, v = map_centroid_to_lattice(x, y, cfg.stride, lat_w, lat_h)
        return np.ones((1, 1)), (u, v)
    if cfg.mode == "gaussian":
        u, v = map_centroid_to_lattice(x, y, cfg.stride, lat_w, lat_h)
        return gaussian_kernel(cfg.sigma, cfg.radius), (u, v)
    px, py = refine_to_peak(image, x, y, cfg.refine_radius)
    u, v = map_centroid_to_lattice(px, py, cfg.stride, lat_w, lat_h)
    g = gaussian_kernel(cfg.sigma, cfg.radius)
    c = extract_contrast_patch(image, px, py, cfg.radius)
    if np.all(c == 1.0):
        return g, (u, v)
    return compose_response(g, c), (u, v)


def build_supervision_map(image: np.ndarray, centroids, cfg: PrpsConfig | None = None) -> np.ndarray:
    """H/s x W/s supervision grid in [0, 1] for one image and its point annotations."""
    cfg = cfg or PrpsConfig()
    cfg.validate()
    lat_h, lat_w = lattice_shape(*image.shape, cfg.stride)
    responses = [target_response(image, x, y, cfg) for x, y in centroids]
    return aggregate_targets(responses, lat_h, lat_w)


def strict_local_maxima(grid: np.ndarray, min_value: float = 0.0) -> list[tuple[int, int]]:
    """Cells strictly greater than all 8 neighbours (borders count as -inf) and above ``min_value``."""
    h, w = grid.shape
    padded = np.pad(grid, 1, constant_values=-np.inf)
    keep = grid > min_value
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            if dy == 0 and dx == 0:
                continue
            keep &= grid > padded[1 + dy:1 + dy + h, 1 + dx:1 + dx + w]
    vs, us = np.nonzero(keep)
    return list(zip(us.tolist(), vs.tolist()))
