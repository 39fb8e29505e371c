"""High-resolution encoder-only response regressor.

Layout (default stride 4)::

    stem      conv3x3/2 1->64 +BN+ReLU, conv3x3/2 64->64 +BN+ReLU
    bottleneck 64 -> 64 -> 256 with projection shortcut
    2 reorganisation units at 256 channels
    transition 1x1 256->32 +BN+ReLU
    N reorganisation units at 32 channels
    head      1x1 32->1, no activation

Stride 2 makes the second stem conv stride 1; stride 8 appends a third
stride-2 stem conv. The trunk never changes resolution after the stem.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .nn import functional as F
from .nn.layers import (
    BatchNorm2d, Bottleneck, Conv2d, DepthwiseConv2d, Layer, ReLU, ReorgUnit,
    Sequential, SqueezeExcite, conv_bn,
)
from .nn.optim import ParamStore
from .rng import Rng

WEIGHTS_MAGIC = b"SPIRE001"


class WeightsError(ValueError):
    """Weight file is corrupt or does not match the requested config."""


@dataclass(frozen=True)
class HrpeConfig:
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

    def validate(self) -> None:
        if self.stride not in (2, 4, 8):
            raise ValueError(f"stride must be 2, 4 or 8, got {self.stride}")
        for name in ("stem_channels", "bottleneck_mid", "bottleneck_out", "trunk_channels", "se_reduction"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.trunk_channels % 2 or self.bottleneck_out % 2:
            raise ValueError("reorganisation units need even channel counts")
        if self.num_reorg_units < 0 or self.wide_units < 0:
            raise ValueError("unit counts must be non-negative")
        if self.extra_dw_every < 1:
            raise ValueError("extra_dw_every must be >= 1")

    def canonical(self) -> str:
        items = asdict(self)
        return ";".join(f"{k}={int(v) if isinstance(v, bool) else v}" for k, v in sorted(items.items()))

    def fingerprint(self) -> int:
        return fnv1a64(self.canonical().encode("utf-8"))


def fnv1a64(data: bytes) -> int:
    h = 0xCBF29CE484222325
    for byte in data:
        h ^= byte
        h = (h * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h


class PlainUnit(Sequential):
    """Stand-in for a reorganisation unit when that component is ablated."""


class Hrpe:
    def __init__(self, cfg: HrpeConfig):
        cfg.validate()
        self.cfg = cfg
        self.store = ParamStore()
        self.buffers: dict[str, np.ndarray] = {}
        st, bf = self.store, self.buffers

        c0 = cfg.stem_channels
        stem = [conv_bn(st, bf, "stem.0", 1, c0, 3, 2),
                conv_bn(st, bf, "stem.1", c0, c0, 3, 1 if cfg.stride == 2 else 2)]
        if cfg.stride == 8:
            stem.append(conv_bn(st, bf, "stem.2", c0, c0, 3, 2))

        blocks: list[Layer] = [Sequential("stem", stem),
                               Bottleneck(st, bf, "bottleneck", c0, cfg.bottleneck_mid, cfg.bottleneck_out)]
        blocks += self._units("wide", cfg.bottleneck_out, cfg.wide_units)
        blocks.append(conv_bn(st, bf, "transition", cfg.bottleneck_out, cfg.trunk_channels, 1))
        blocks += self._units("trunk", cfg.trunk_channels, cfg.num_reorg_units)
        self.head = Conv2d(st, "head", cfg.trunk_channels, 1, 1)
        blocks.append(self.head)
        self.blocks = blocks

    def _units(self, prefix: str, channels: int, count: int) -> list[Layer]:
        cfg = self.cfg
        units: list[Layer] = []
        for i in range(count):
            name = f"{prefix}.{i}"
            if cfg.enable_channel_reorg:
                units.append(ReorgUnit(self.store, self.buffers, name, channels,
                                       extra_dw=(i % cfg.extra_dw_every == 0),
                                       reweight=cfg.enable_reweighting,
                                       se_reduction=cfg.se_reduction))
            else:
                plain = conv_bn(self.store, self.buffers, name, channels, channels, 3)
                units.append(PlainUnit(name, plain.layers))
        return units

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        """``x``: N x 1 x H x W with H, W divisible by the stride; returns N x 1 x H/s x W/s."""
        if x.ndim != 4 or x.shape[1] != 1:
            raise ValueError(f"expected N x 1 x H x W input, got {x.shape}")
        s = self.cfg.stride
        if x.shape[2] % s or x.shape[3] % s:
            raise ValueError(f"input {x.shape[2]}x{x.shape[3]} not divisible by stride {s}")
        for block in self.blocks:
            x = block.forward(x, train)
        return x

    def backward(self, dout: np.ndarray) -> np.ndarray:
        for block in reversed(self.blocks):
            dout = block.backward(dout)
        return dout

    def layers(self):
        for block in self.blocks:
            yield from block.walk()

    def set_bn_update(self, enabled: bool) -> None:
        for layer in self.layers():
            if isinstance(layer, BatchNorm2d):
                layer.update_stats = enabled


def build_model(cfg: HrpeConfig | None = None, seed: int | None = None) -> Hrpe:
    model = Hrpe(cfg or HrpeConfig())
    if seed is not None:
        init_weights(model, seed)
    return model


def init_weights(model: Hrpe, seed: int) -> None:
    """He-normal conv/linear weights from the splitmix64 stream, BN gamma=1, beta=0, biases 0.

    Parameters are visited in insertion order, so the draw sequence is fixed.
    """
    rng = Rng(seed)
    for name, p in model.store.items():
        if name.endswith(".weight"):
            fan_in = int(np.prod(p.shape[1:]))
            p[...] = (rng.normal(p.size) * np.sqrt(2.0 / fan_in)).reshape(p.shape)
        elif name.endswith(".gamma"):
            p[...] = 1
        else:
            p[...] = 0
    for name, buf in model.buffers.items():
        buf[...] = 1 if name.endswith("running_var") else 0


def count_params_flops(cfg: HrpeConfig, height: int = 640, width: int = 640) -> dict:
    """Analytic parameter count and FLOPs (2 x multiply-adds) for one image."""
    model = Hrpe(cfg)
    flops = 0

    def account(layer: Layer, shape):
        nonlocal flops
        c, h, w = shape
        if isinstance(layer, Conv2d):
            ho = F.conv_out_size(h, layer.kernel, layer.stride, layer.pad)
            wo = F.conv_out_size(w, layer.kernel, layer.stride, layer.pad)
            flops += 2 * layer.out_ch * layer.in_ch * layer.kernel ** 2 * ho * wo
            return layer.out_ch, ho, wo
        if isinstance(layer, DepthwiseConv2d):
            ho = F.conv_out_size(h, layer.kernel, layer.stride, layer.pad)
            wo = F.conv_out_size(w, layer.kernel, layer.stride, layer.pad)
            flops += 2 * c * layer.kernel ** 2 * ho * wo
            return c, ho, wo
        if isinstance(layer, BatchNorm2d):
            flops += 2 * c * h * w
            return shape
        if isinstance(layer, ReLU):
            flops += c * h * w
            return shape
        if isinstance(layer, SqueezeExcite):
            flops += c * h * w                                   # pooling
            flops += 2 * 2 * c * layer.hidden + layer.hidden     # two fc + relu
            flops += c + c * h * w                               # sigmoid + scaling
            return shape
        if isinstance(layer, Sequential):
            for child in layer.layers:
                shape = account(child, shape)
            return shape
        if isinstance(layer, Bottleneck):
            out = account(layer.main, shape)
            account(layer.shortcut, shape)
            flops += out[0] * out[1] * out[2]                    # residual add
            return account(layer.relu, out)
        if isinstance(layer, ReorgUnit):
            half = (c // 2, h, w)
            account(layer.branch, half)
            return shape
        raise TypeError(f"no FLOP rule for {type(layer).__name__}")

    shape = (1, height, width)
    for block in model.blocks:
        shape = account(block, shape)
    params = model.store.num_scalars()
    return {
        "params": params,
        "flops": flops,
        "params_m": params / 1e6,
        "flops_g": flops / 1e9,
        "output_shape": list(shape),
    }


def save_weights(model: Hrpe, path) -> None:
    Path(path).write_bytes(weights_to_bytes(model))


def weights_to_bytes(model: Hrpe) -> bytes:
    parts = [WEIGHTS_MAGIC]
    tensors = list(model.store.items()) + list(model.buffers.items())
    for name, arr in tensors:
        raw = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<I", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    parts.append(struct.pack("<Q", model.cfg.fingerprint()))
    return b"".join(parts)


def _parse_records(data: bytes) -> list[tuple[str, np.ndarray]]:
    if len(data) < len(WEIGHTS_MAGIC) + 8 or not data.startswith(WEIGHTS_MAGIC):
        raise WeightsError("bad magic or file too short")
    body = memoryview(data)[len(WEIGHTS_MAGIC):-8]
    records = []
    pos = 0
    try:
        while pos < len(body):
            (nlen,) = struct.unpack_from("<I", body, pos)
            pos += 4
            if pos + nlen > len(body):
                raise WeightsError("truncated tensor name")
            name = bytes(body[pos:pos + nlen]).decode("utf-8")
            pos += nlen
            (ndim,) = struct.unpack_from("<I", body, pos)
            pos += 4
            dims = struct.unpack_from(f"<{ndim}I", body, pos)
            pos += 4 * ndim
            count = int(np.prod(dims)) if ndim else 1
            if pos + 4 * count > len(body):
                raise WeightsError("truncated tensor data")
            arr = np.frombuffer(body, dtype="<f4", count=count, offset=pos).reshape(dims)
            pos += 4 * count
            records.append((name, arr))
    except (struct.error, UnicodeDecodeError, ValueError) as exc:
        raise WeightsError(str(exc)) from exc
    return records


def load_weights(path, cfg: HrpeConfig) -> Hrpe:
    """Load a weight file; raises :class:`WeightsError` on corruption or config mismatch."""
    return weights_from_bytes(Path(path).read_bytes(), cfg, source=str(path))


def weights_from_bytes(data: bytes, cfg: HrpeConfig, source: str = "<bytes>") -> Hrpe:
    path = source
    try:
        records = _parse_records(data)
    except WeightsError as exc:
        raise WeightsError(f"{path}: corrupt weight file ({exc})") from exc
    (fingerprint,) = struct.unpack("<Q", data[-8:])
    if fingerprint != cfg.fingerprint():
        raise WeightsError(f"{path}: config fingerprint {fingerprint:016x} does not match "
                           f"requested config {cfg.fingerprint():016x}")
    model = Hrpe(cfg)
    seen = set()
    for name, arr in records:
        target = model.store.params.get(name)
        if target is None:
            target = model.buffers.get(name)
        if target is None or target.shape != arr.shape:
            raise WeightsError(f"{path}: corrupt weight file, unexpected tensor {name!r} {arr.shape}")
        target[...] = arr
        seen.add(name)
    missing = (set(model.store.params) | set(model.buffers)) - seen
    if missing:
        raise WeightsError(f"{path}: corrupt weight file, missing {sorted(missing)[:3]}")
    return model


def weights_digest(model: Hrpe) -> str:
    return hashlib.sha256(weights_to_bytes(model)).hexdigest()
