"""Stateful layers composed into a fixed forward/backward chain.

Layers never hold parameter arrays directly: they look them up by name in
the shared :class:`ParamStore` on every call, so casting the store (e.g. to
float64 for gradient checks) is picked up without rebuilding the model.
"""

from __future__ import annotations

import numpy as np

from . import functional as F
from .optim import ParamStore


class Layer:
    name: str = ""

    def forward(self, x: np.ndarray, train: bool) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dout: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def children(self) -> list["Layer"]:
        return []

    def walk(self):
        yield self
        for child in self.children():
            yield from child.walk()


class Conv2d(Layer):
    def __init__(self, store: ParamStore, name: str, in_ch: int, out_ch: int,
                 kernel: int, stride: int = 1, bias: bool = True):
        self.store, self.name = store, name
        self.in_ch, self.out_ch, self.kernel, self.stride = in_ch, out_ch, kernel, stride
        self.pad = kernel // 2
        self.has_bias = bias
        store.add(f"{name}.weight", np.zeros((out_ch, in_ch, kernel, kernel), np.float32))
        if bias:
            store.add(f"{name}.bias", np.zeros(out_ch, np.float32))
        self._cache = None

    def forward(self, x, train):
        b = self.store[f"{self.name}.bias"] if self.has_bias else None
        out, self._cache = F.conv2d_forward(x, self.store[f"{self.name}.weight"], b, self.stride, self.pad)
        return out

    def backward(self, dout):
        dx, dw, db = F.conv2d_backward(dout, self._cache)
        self.store.accumulate(f"{self.name}.weight", dw)
        if self.has_bias:
            self.store.accumulate(f"{self.name}.bias", db)
        return dx


class DepthwiseConv2d(Layer):
    def __init__(self, store: ParamStore, name: str, channels: int, kernel: int = 3, stride: int = 1):
        self.store, self.name = store, name
        self.channels, self.kernel, self.stride = channels, kernel, stride
        self.pad = kernel // 2
        store.add(f"{name}.weight", np.zeros((channels, 1, kernel, kernel), np.float32))
        self._cache = None

    def forward(self, x, train):
        out, self._cache = F.depthwise_conv2d_forward(
            x, self.store[f"{self.name}.weight"], None, self.stride, self.pad)
        return out

    def backward(self, dout):
        dx, dw, _ = F.depthwise_conv2d_backward(dout, self._cache)
        self.store.accumulate(f"{self.name}.weight", dw)
        return dx


class BatchNorm2d(Layer):
    def __init__(self, store: ParamStore, buffers: dict, name: str, channels: int,
                 momentum: float = 0.1, eps: float = 1e-5):
        self.store, self.name = store, name
        self.channels, self.momentum, self.eps = channels, momentum, eps
        store.add(f"{name}.gamma", np.ones(channels, np.float32))
        store.add(f"{name}.beta", np.zeros(channels, np.float32))
        self.state = F.BNState(channels)
        buffers[f"{name}.running_mean"] = self.state.running_mean
        buffers[f"{name}.running_var"] = self.state.running_var
        self.update_stats = True
        self._cache = None

    def forward(self, x, train):
        out, self._cache = F.batchnorm2d_forward(
            x, self.store[f"{self.name}.gamma"], self.store[f"{self.name}.beta"],
            self.state, train, self.momentum, self.eps, self.update_stats)
        return out

    def backward(self, dout):
        dx, dg, db = F.batchnorm2d_backward(dout, self._cache)
        self.store.accumulate(f"{self.name}.gamma", dg)
        self.store.accumulate(f"{self.name}.beta", db)
        return dx


class ReLU(Layer):
    def __init__(self, name: str = "relu"):
        self.name = name
        self._mask = None

    def forward(self, x, train):
        out, self._mask = F.relu_forward(x)
        return out

    def backward(self, dout):
        return F.relu_backward(dout, self._mask)


class Sequential(Layer):
    def __init__(self, name: str, layers: list[Layer]):
        self.name = name
        self.layers = layers

    def forward(self, x, train):
        for layer in self.layers:
            x = layer.forward(x, train)
        return x

    def backward(self, dout):
        for layer in reversed(self.layers):
            dout = layer.backward(dout)
        return dout

    def children(self):
        return list(self.layers)


def conv_bn(store, buffers, name, in_ch, out_ch, kernel, stride=1, relu=True) -> Sequential:
    layers: list[Layer] = [
        Conv2d(store, f"{name}.conv", in_ch, out_ch, kernel, stride),
        BatchNorm2d(store, buffers, f"{name}.bn", out_ch),
    ]
    if relu:
        layers.append(ReLU(f"{name}.relu"))
    return Sequential(name, layers)


class SqueezeExcite(Layer):
    """Per-channel gating: pool -> fc -> relu -> fc -> sigmoid -> scale."""

    def __init__(self, store: ParamStore, name: str, channels: int, reduction: int = 4):
        self.store, self.name = store, name
        self.channels = channels
        self.hidden = max(1, channels // reduction)
        store.add(f"{name}.fc1.weight", np.zeros((self.hidden, channels), np.float32))
        store.add(f"{name}.fc1.bias", np.zeros(self.hidden, np.float32))
        store.add(f"{name}.fc2.weight", np.zeros((channels, self.hidden), np.float32))
        store.add(f"{name}.fc2.bias", np.zeros(channels, np.float32))
        self._cache = None

    def forward(self, x, train):
        s = self.store
        pooled, shape = F.global_avg_pool_forward(x)
        z1, c1 = F.linear_forward(pooled, s[f"{self.name}.fc1.weight"], s[f"{self.name}.fc1.bias"])
        a1, mask = F.relu_forward(z1)
        z2, c2 = F.linear_forward(a1, s[f"{self.name}.fc2.weight"], s[f"{self.name}.fc2.bias"])
        gate = F.sigmoid(z2)
        self._cache = (x, shape, c1, mask, c2, gate)
        return x * gate[:, :, None, None]

    def backward(self, dout):
        x, shape, c1, mask, c2, gate = self._cache
        dx = dout * gate[:, :, None, None]
        dgate = (dout * x).sum(axis=(2, 3))
        dz2 = F.sigmoid_backward(dgate, gate)
        da1, dw2, db2 = F.linear_backward(dz2, c2)
        dz1 = F.relu_backward(da1, mask)
        dpooled, dw1, db1 = F.linear_backward(dz1, c1)
        self.store.accumulate(f"{self.name}.fc2.weight", dw2)
        self.store.accumulate(f"{self.name}.fc2.bias", db2)
        self.store.accumulate(f"{self.name}.fc1.weight", dw1)
        self.store.accumulate(f"{self.name}.fc1.bias", db1)
        return dx + F.global_avg_pool_backward(dpooled, shape)


class Bottleneck(Layer):
    """1x1 reduce, 3x3, 1x1 expand, plus a 1x1 projection shortcut; ReLU after the sum."""

    def __init__(self, store, buffers, name, in_ch, mid_ch, out_ch):
        self.name = name
        self.main = Sequential(f"{name}.main", [
            conv_bn(store, buffers, f"{name}.reduce", in_ch, mid_ch, 1),
            conv_bn(store, buffers, f"{name}.spatial", mid_ch, mid_ch, 3),
            conv_bn(store, buffers, f"{name}.expand", mid_ch, out_ch, 1, relu=False),
        ])
        self.shortcut = conv_bn(store, buffers, f"{name}.shortcut", in_ch, out_ch, 1, relu=False)
        self.relu = ReLU(f"{name}.relu")

    def forward(self, x, train):
        return self.relu.forward(self.main.forward(x, train) + self.shortcut.forward(x, train), train)

    def backward(self, dout):
        d = self.relu.backward(dout)
        return self.main.backward(d) + self.shortcut.backward(d)

    def children(self):
        return [self.main, self.shortcut, self.relu]


class ReorgUnit(Layer):
    """Split channels, refine one half (depthwise conv + BN, optional SE), concat, shuffle."""

    def __init__(self, store, buffers, name, channels, extra_dw: bool,
                 reweight: bool = True, se_reduction: int = 4):
        if channels % 2:
            raise ValueError("channel reorganisation needs an even channel count")
        self.name = name
        self.channels = channels
        half = channels // 2
        branch: list[Layer] = [
            DepthwiseConv2d(store, f"{name}.dw1", half),
            BatchNorm2d(store, buffers, f"{name}.dw1_bn", half),
        ]
        if extra_dw:
            branch += [
                DepthwiseConv2d(store, f"{name}.dw2", half),
                BatchNorm2d(store, buffers, f"{name}.dw2_bn", half),
            ]
        if reweight:
            branch.append(SqueezeExcite(store, f"{name}.se", half, se_reduction))
        self.branch = Sequential(f"{name}.branch", branch)

    def forward(self, x, train):
        a, b = F.channel_split(x, self.channels // 2)
        return F.channel_shuffle(F.channel_concat(a, self.branch.forward(b, train)), 2)

    def backward(self, dout):
        d = F.channel_shuffle_backward(dout, 2)
        half = self.channels // 2
        db = self.branch.backward(np.ascontiguousarray(d[:, half:]))
        return F.channel_concat(d[:, :half], db)

    def children(self):
        return [self.branch]
