"""Deterministic synthetic infrared scenes: smooth clutter, white noise, Gaussian PSF targets."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .rng import Rng, splitmix64


@dataclass(frozen=True)
class TargetSpec:
    x: float
    y: float
    amplitude: float
    psf_sigma: float

    def validate(self) -> None:
        if not 0 < self.psf_sigma <= 3:
            raise ValueError(f"psf_sigma must lie in (0, 3], got {self.psf_sigma}")
        if self.amplitude <= 0:
            raise ValueError(f"amplitude must be positive, got {self.amplitude}")


@dataclass(frozen=True)
class SceneSpec:
    width: int
    height: int
    targets: tuple[TargetSpec, ...] = ()
    clutter_scale: int = 6
    noise_sigma: float = 0.03
    seed: int = 0
    background_band: tuple[float, float] = (0.2, 0.6)
    clutter_gain: float = 8.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["background_band"] = list(self.background_band)
        d["targets"] = [asdict(t) for t in self.targets]
        return d


@dataclass
class Scene:
    image: np.ndarray                  # H x W float64 in [0, 1]
    centroids: list[tuple[float, float]]
    spec: SceneSpec

    @property
    def shape(self) -> tuple[int, int]:
        return self.image.shape


@dataclass(frozen=True)
class DatasetKnobs:
    """Difficulty knobs for :func:`gen_dataset`; ranges are sampled uniformly."""

    width: int = 64
    height: int = 64
    min_targets: int = 1
    max_targets: int = 3
    empty_fraction: float = 0.0
    psf_sigma: tuple[float, float] = (0.8, 1.5)
    snr: tuple[float, float] = (5.0, 15.0)
    noise_sigma: tuple[float, float] = (0.02, 0.04)
    clutter_scale: int = 6
    clutter_gain: float = 8.0
    min_separation: float = 16.0


def render_target(canvas: np.ndarray, t: TargetSpec) -> None:
    """Add a truncated (radius 4*psf_sigma) Gaussian PSF to ``canvas`` in place."""
    t.validate()
    h, w = canvas.shape
    if not (0 <= t.x <= w - 1 and 0 <= t.y <= h - 1):
        raise ValueError(f"target centre ({t.x}, {t.y}) outside {w}x{h} canvas")
    rad = 4.0 * t.psf_sigma
    x0, x1 = max(0, math.ceil(t.x - rad)), min(w - 1, math.floor(t.x + rad))
    y0, y1 = max(0, math.ceil(t.y - rad)), min(h - 1, math.floor(t.y + rad))
    xs = np.arange(x0, x1 + 1, dtype=np.float64) - t.x
    ys = np.arange(y0, y1 + 1, dtype=np.float64) - t.y
    d2 = ys[:, None] ** 2 + xs[None, :] ** 2
    psf = t.amplitude * np.exp(-d2 / (2.0 * t.psf_sigma ** 2))
    psf[d2 > rad * rad] = 0.0
    canvas[y0:y1 + 1, x0:x1 + 1] += psf


def box_blur(field_: np.ndarray, radius: int) -> np.ndarray:
    """Mean over a (2r+1)^2 box, borders mirrored (valid for any radius)."""
    if radius <= 0:
        return field_.copy()
    k = 2 * radius + 1
    out = field_
    for axis in (0, 1):
        pad = [(0, 0), (0, 0)]
        pad[axis] = (radius + 1, radius)
        c = np.cumsum(np.pad(out, pad, mode="symmetric"), axis=axis)
        hi = np.take(c, np.arange(k, c.shape[axis]), axis=axis)
        lo = np.take(c, np.arange(0, c.shape[axis] - k), axis=axis)
        out = (hi - lo) / k
    return out


def render_clutter(spec: SceneSpec, rng: Rng | None = None) -> np.ndarray:
    """Smooth background in the configured band plus white noise.

    Draw order from the scene seed: H*W normals for the clutter field, then
    H*W normals for the sensor noise.
    """
    rng = rng or Rng(spec.seed)
    h, w = spec.height, spec.width
    field_ = rng.normal(h * w).reshape(h, w)
    for _ in range(3):
        field_ = box_blur(field_, spec.clutter_scale)
    lo, hi = spec.background_band
    mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
    bg = mid + half * np.clip(spec.clutter_gain * field_, -1.0, 1.0)
    noise = rng.normal(h * w).reshape(h, w)
    return bg + spec.noise_sigma * noise


def check_separation(targets, min_separation: float = 0.0) -> None:
    for i, a in enumerate(targets):
        for b in targets[i + 1:]:
            need = max(min_separation, 6.0 * max(a.psf_sigma, b.psf_sigma))
            if math.hypot(a.x - b.x, a.y - b.y) < need:
                raise ValueError(f"targets at ({a.x:.2f},{a.y:.2f}) and ({b.x:.2f},{b.y:.2f}) "
                                 f"closer than {need:.2f} px")


def compose_scene(spec: SceneSpec) -> Scene:
    check_separation(spec.targets)
    canvas = render_clutter(spec)
    for t in spec.targets:
        render_target(canvas, t)
    np.clip(canvas, 0.0, 1.0, out=canvas)
    return Scene(canvas, [(t.x, t.y) for t in spec.targets], spec)


def scene_seed(master_seed: int, index: int) -> int:
    return splitmix64(master_seed + index)


def sample_spec(seed: int, knobs: DatasetKnobs) -> SceneSpec:
    """Scene layout from a per-scene seed. Draw order is fixed:
    empty flag, target count, noise level, then per target (psf, snr, x, y)
    with rejection on separation, and finally the clutter/noise seed."""
    rng = Rng(seed)
    empty = rng.uniform() < knobs.empty_fraction
    count = rng.randint(knobs.min_targets, knobs.max_targets)
    if empty:
        count = 0
    noise_sigma = rng.uniform_range(*knobs.noise_sigma)
    targets: list[TargetSpec] = []
    for _ in range(count):
        psf = rng.uniform_range(*knobs.psf_sigma)
        snr = rng.uniform_range(*knobs.snr)
        margin = 3.0 * psf
        for _attempt in range(1000):
            x = rng.uniform_range(margin, knobs.width - 1 - margin)
            y = rng.uniform_range(margin, knobs.height - 1 - margin)
            cand = TargetSpec(x, y, snr * noise_sigma, psf)
            try:
                check_separation(targets + [cand], knobs.min_separation)
            except ValueError:
                continue
            targets.append(cand)
            break
        else:
            raise RuntimeError(f"could not place {count} separated targets in "
                               f"{knobs.width}x{knobs.height} (seed {seed})")
    return SceneSpec(knobs.width, knobs.height, tuple(targets), knobs.clutter_scale,
                     noise_sigma, rng.next_u64(), clutter_gain=knobs.clutter_gain)


def gen_scene(master_seed: int, index: int, knobs: DatasetKnobs | None = None) -> Scene:
    return compose_scene(sample_spec(scene_seed(master_seed, index), knobs or DatasetKnobs()))


def gen_dataset(count: int, master_seed: int, knobs: DatasetKnobs | None = None,
                start: int = 0) -> list[Scene]:
    """Scenes ``start .. start+count-1``; each is reproducible on its own via :func:`gen_scene`."""
    if count < 1:
        raise ValueError("dataset needs at least one scene")
    knobs = knobs or DatasetKnobs()
    return [gen_scene(master_seed, start + i, knobs) for i in range(count)]
