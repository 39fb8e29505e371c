"""Flat ``section.key=value`` run configuration.

Every key has a default; unknown keys are rejected. The effective config is
rendered back to canonical text (sorted keys) for echoing into artifacts.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .infer import InferConfig
from .model import HrpeConfig
from .prps import PrpsConfig
from .scene import DatasetKnobs


class ConfigError(ValueError):
    pass


@dataclass
class SceneSection:
    train_count: int = 200
    test_count: int = 50
    seed: int = 1
    width: int = 64
    height: int = 64
    min_targets: int = 1
    max_targets: int = 3
    empty_fraction: float = 0.0
    psf_sigma_min: float = 0.8
    psf_sigma_max: float = 1.5
    snr_min: float = 5.0
    snr_max: float = 15.0
    noise_sigma_min: float = 0.02
    noise_sigma_max: float = 0.04
    clutter_scale: int = 6
    clutter_gain: float = 8.0
    min_separation: float = 16.0


@dataclass
class PrpsSection:
    mode: str = "prps"
    sigma: float = 2.0
    radius: int = 6
    refine_radius: int = 4
    free_radius: bool = False


@dataclass
class ModelSection:
    stride: int = 4
    stem_channels: int = 64
    bottleneck_mid: int = 64
    bottleneck_out: int = 256
    wide_units: int = 2
    trunk_channels: int = 32
    num_reorg_units: int = 8
    extra_dw_every: int = 2
    enable_channel_reorg: bool = True
    enable_reweighting: bool = True
    se_reduction: int = 4


@dataclass
class TrainSection:
    epochs: int = 60
    batch_size: int = 10
    lr: float = 0.01
    lr_factor: float = 0.01
    lr_patience: int = 3
    seed: int = 1
    val_fraction: float = 0.1
    augment_flip: bool = False


@dataclass
class InferSection:
    tau: float = 0.35
    max_detections: int = 128


@dataclass
class EvalSection:
    delta: float = 5.0


@dataclass
class BenchSection:
    height: int = 640
    width: int = 640
    repeats: int = 1


@dataclass
class AblateSection:
    # comma list of: mode, sigma, stride, components
    axes: str = "mode"


SECTIONS = {
    "scene": SceneSection, "prps": PrpsSection, "model": ModelSection, "train": TrainSection,
    "infer": InferSection, "eval": EvalSection, "bench": BenchSection, "ablate": AblateSection,
}


def _parse_value(raw: str, typ):
    raw = raw.strip()
    if typ is bool or typ == "bool":
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"not a boolean: {raw!r}")
    if typ is int or typ == "int":
        return int(raw)
    if typ is float or typ == "float":
        return float(raw)
    return raw


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    return repr(v) if isinstance(v, float) else str(v)


@dataclass
class RunConfig:
    scene: SceneSection = field(default_factory=SceneSection)
    prps: PrpsSection = field(default_factory=PrpsSection)
    model: ModelSection = field(default_factory=ModelSection)
    train: TrainSection = field(default_factory=TrainSection)
    infer: InferSection = field(default_factory=InferSection)
    eval: EvalSection = field(default_factory=EvalSection)
    bench: BenchSection = field(default_factory=BenchSection)
    ablate: AblateSection = field(default_factory=AblateSection)

    def set(self, key: str, raw: str) -> None:
        section, _, name = key.strip().partition(".")
        if section not in SECTIONS or not name:
            raise ConfigError(f"unknown config key {key!r}")
        obj = getattr(self, section)
        types = {f.name: f.type for f in fields(obj)}
        if name not in types:
            raise ConfigError(f"unknown config key {key!r}")
        try:
            setattr(obj, name, _parse_value(raw, types[name]))
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {exc}") from exc

    def update_text(self, text: str) -> None:
        for lineno, line in enumerate(text.splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
            key, _, value = line.partition("=")
            self.set(key, value)

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        cfg = cls()
        cfg.update_text(Path(path).read_text(encoding="utf-8"))
        return cfg

    def items(self):
        for section in SECTIONS:
            obj = getattr(self, section)
            for f in fields(obj):
                yield f"{section}.{f.name}", getattr(obj, f.name)

    def to_text(self) -> str:
        return "".join(f"{k}={_fmt(v)}\n" for k, v in self.items())

    def to_dict(self) -> dict:
        return dict(self.items())

    def copy(self) -> "RunConfig":
        return RunConfig(**{s: replace(getattr(self, s)) for s in SECTIONS})

    # typed views for the library layers

    def knobs(self) -> DatasetKnobs:
        s = self.scene
        return DatasetKnobs(
            width=s.width, height=s.height, min_targets=s.min_targets, max_targets=s.max_targets,
            empty_fraction=s.empty_fraction, psf_sigma=(s.psf_sigma_min, s.psf_sigma_max),
            snr=(s.snr_min, s.snr_max), noise_sigma=(s.noise_sigma_min, s.noise_sigma_max),
            clutter_scale=s.clutter_scale, clutter_gain=s.clutter_gain,
            min_separation=s.min_separation)

    def prps_config(self) -> PrpsConfig:
        p = self.prps
        cfg = PrpsConfig(sigma=p.sigma, radius=p.radius, stride=self.model.stride, mode=p.mode,
                         refine_radius=p.refine_radius, free_radius=p.free_radius)
        cfg.validate()
        return cfg

    def hrpe_config(self) -> HrpeConfig:
        m = self.model
        cfg = HrpeConfig(**{f.name: getattr(m, f.name) for f in fields(m)})
        cfg.validate()
        return cfg

    def infer_config(self) -> InferConfig:
        cfg = InferConfig(self.infer.tau, self.infer.max_detections)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        self.prps_config()
        self.hrpe_config()
        self.infer_config()
        if self.scene.train_count < 1 or self.scene.test_count < 0:
            raise ConfigError("scene.train_count must be >= 1 and scene.test_count >= 0")
        if self.train.epochs < 1 or self.train.batch_size < 1:
            raise ConfigError("train.epochs and train.batch_size must be >= 1")
        if not 0 <= self.train.val_fraction < 1:
            raise ConfigError("train.val_fraction must lie in [0, 1)")
        if self.eval.delta <= 0:
            raise ConfigError("eval.delta must be positive")
