"""Forward/backward kernels on NCHW numpy arrays.

Every ``*_forward`` returns ``(out, cache)``; the matching ``*_backward``
takes the upstream gradient and the cache. Kernels run in the dtype of
their inputs, so float64 arrays give the gradient-check path for free.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _check_4d(x: np.ndarray, name: str = "input") -> None:
    if x.ndim != 4:
        raise ValueError(f"{name} must be 4-D NCHW, got shape {x.shape}")


def conv_out_size(size: int, k: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - k) // stride + 1


def _im2col(x: np.ndarray, kh: int, kw: int, stride: int, pad: int):
    n, c, h, w = x.shape
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    ho = conv_out_size(h, kh, stride, pad)
    wo = conv_out_size(w, kw, stride, pad)
    # (N, C, Ho', Wo', kh, kw) -> strided -> (N, Ho, Wo, C, kh, kw)
    win = sliding_window_view(x, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * kh * kw)
    return cols, ho, wo


def conv2d_forward(x, weight, bias, stride: int = 1, pad: int = 0):
    """Cross-correlation with symmetric zero padding."""
    _check_4d(x)
    if weight.ndim != 4:
        raise ValueError(f"weight must be OC x IC x kh x kw, got {weight.shape}")
    oc, ic, kh, kw = weight.shape
    n, c, h, w = x.shape
    if c != ic:
        raise ValueError(f"input has {c} channels but weight expects {ic}")
    if bias is not None and bias.shape != (oc,):
        raise ValueError(f"bias shape {bias.shape} does not match {oc} output channels")
    if h + 2 * pad < kh or w + 2 * pad < kw:
        raise ValueError(f"kernel {kh}x{kw} larger than padded input {h}x{w} (pad {pad})")

    if kh == 1 and kw == 1 and pad == 0:
        xs = x[:, :, ::stride, ::stride]
        ho, wo = xs.shape[2], xs.shape[3]
        cols = xs.transpose(0, 2, 3, 1).reshape(n * ho * wo, c)
    else:
        cols, ho, wo = _im2col(x, kh, kw, stride, pad)
    out = cols @ weight.reshape(oc, -1).T
    if bias is not None:
        out += bias
    out = np.ascontiguousarray(out.reshape(n, ho, wo, oc).transpose(0, 3, 1, 2))
    cache = (x.shape, cols, weight, stride, pad, bias is not None)
    return out, cache


def conv2d_backward(dout, cache):
    """Returns ``(dx, dweight, dbias)``; ``dbias`` is None without bias."""
    xshape, cols, weight, stride, pad, has_bias = cache
    n, c, h, w = xshape
    oc, ic, kh, kw = weight.shape
    ho, wo = dout.shape[2], dout.shape[3]
    dflat = dout.transpose(0, 2, 3, 1).reshape(n * ho * wo, oc)
    dweight = (dflat.T @ cols).reshape(weight.shape)
    dbias = dflat.sum(axis=0) if has_bias else None
    dcols = dflat @ weight.reshape(oc, -1)

    if kh == 1 and kw == 1 and pad == 0:
        dx = np.zeros(xshape, dtype=dout.dtype)
        dx[:, :, ::stride, ::stride] = dcols.reshape(n, ho, wo, c).transpose(0, 3, 1, 2)
        return dx, dweight, dbias

    dcols = dcols.reshape(n, ho, wo, c, kh, kw)
    dxp = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=dout.dtype)
    for i in range(kh):
        for j in range(kw):
            dxp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += (
                dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
            )
    dx = dxp[:, :, pad:pad + h, pad:pad + w] if pad else dxp
    return np.ascontiguousarray(dx), dweight, dbias


def depthwise_conv2d_forward(x, weight, bias=None, stride: int = 1, pad: int = 1):
    """One ``kh x kw`` kernel per channel (``weight``: C x 1 x kh x kw)."""
    _check_4d(x)
    n, c, h, w = x.shape
    if weight.ndim != 4 or weight.shape[0] != c or weight.shape[1] != 1:
        raise ValueError(f"depthwise weight must be {c} x 1 x kh x kw, got {weight.shape}")
    kh, kw = weight.shape[2], weight.shape[3]
    ho = conv_out_size(h, kh, stride, pad)
    wo = conv_out_size(w, kw, stride, pad)
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    out = np.zeros((n, c, ho, wo), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            out += xp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] * weight[:, 0, i, j][:, None, None]
    if bias is not None:
        out += bias[:, None, None]
    return out, (xp, weight, stride, pad, x.shape, bias is not None)


def depthwise_conv2d_backward(dout, cache):
    xp, weight, stride, pad, xshape, has_bias = cache
    n, c, h, w = xshape
    kh, kw = weight.shape[2], weight.shape[3]
    ho, wo = dout.shape[2], dout.shape[3]
    dxp = np.zeros_like(xp)
    dweight = np.zeros_like(weight)
    for i in range(kh):
        for j in range(kw):
            sl = (slice(None), slice(None), slice(i, i + stride * ho, stride), slice(j, j + stride * wo, stride))
            dweight[:, 0, i, j] = np.einsum("nchw,nchw->c", dout, xp[sl])
            dxp[sl] += dout * weight[:, 0, i, j][:, None, None]
    dbias = dout.sum(axis=(0, 2, 3)) if has_bias else None
    dx = dxp[:, :, pad:pad + h, pad:pad + w] if pad else dxp
    return np.ascontiguousarray(dx), dweight, dbias


class BNState:
    """Running statistics for one batch-norm layer (mutated in train mode)."""

    def __init__(self, channels: int, dtype=np.float32):
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)


def batchnorm2d_forward(x, gamma, beta, state: BNState, train: bool,
                        momentum: float = 0.1, eps: float = 1e-5, update_stats: bool = True):
    if eps <= 0:
        raise ValueError("batchnorm eps must be positive")
    _check_4d(x)
    if gamma.shape != (x.shape[1],) or beta.shape != (x.shape[1],):
        raise ValueError("gamma/beta must have one entry per channel")
    if train:
        mean = x.mean(axis=(0, 2, 3))
        var = x.var(axis=(0, 2, 3))
        if update_stats:
            m = x.shape[0] * x.shape[2] * x.shape[3]
            unbiased = var * (m / max(m - 1, 1))
            state.running_mean[...] = (1 - momentum) * state.running_mean + momentum * mean
            state.running_var[...] = (1 - momentum) * state.running_var + momentum * unbiased
    else:
        mean = state.running_mean.astype(x.dtype)
        var = state.running_var.astype(x.dtype)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x - mean[:, None, None]) * inv_std[:, None, None]
    out = gamma[:, None, None] * xhat + beta[:, None, None]
    return out, (xhat, inv_std, gamma, train)


def batchnorm2d_backward(dout, cache):
    """Returns ``(dx, dgamma, dbeta)``."""
    xhat, inv_std, gamma, train = cache
    dbeta = dout.sum(axis=(0, 2, 3))
    dgamma = (dout * xhat).sum(axis=(0, 2, 3))
    g = (gamma * inv_std)[:, None, None]
    if not train:
        return dout * g, dgamma, dbeta
    m = dout.shape[0] * dout.shape[2] * dout.shape[3]
    dx = g * (dout - (dbeta / m)[:, None, None] - xhat * (dgamma / m)[:, None, None])
    return dx, dgamma, dbeta


def relu_forward(x):
    return np.maximum(x, 0), x > 0


def relu_backward(dout, mask):
    return dout * mask


def sigmoid(x):
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def sigmoid_backward(dout, out):
    return dout * out * (1 - out)


def global_avg_pool_forward(x):
    _check_4d(x)
    return x.mean(axis=(2, 3)), x.shape


def global_avg_pool_backward(dout, shape):
    n, c, h, w = shape
    return np.broadcast_to((dout / (h * w))[:, :, None, None], shape).copy()


def linear_forward(x, weight, bias):
    """``x``: N x IN, ``weight``: OUT x IN."""
    if x.ndim != 2 or weight.ndim != 2 or x.shape[1] != weight.shape[1]:
        raise ValueError(f"linear shape mismatch: input {x.shape}, weight {weight.shape}")
    return x @ weight.T + bias, (x, weight)


def linear_backward(dout, cache):
    x, weight = cache
    return dout @ weight, dout.T @ x, dout.sum(axis=0)


def channel_split(x, at: int):
    _check_4d(x)
    c = x.shape[1]
    if not 0 < at < c:
        raise ValueError(f"split point {at} outside (0, {c})")
    return x[:, :at], x[:, at:]


def channel_concat(a, b):
    return np.concatenate([a, b], axis=1)


def shuffle_permutation(channels: int, groups: int) -> np.ndarray:
    """``perm[j]`` is the source channel of output channel ``j``."""
    if groups < 1 or channels % groups:
        raise ValueError(f"{channels} channels not divisible into {groups} groups")
    return np.arange(channels).reshape(groups, channels // groups).T.reshape(-1)


def channel_shuffle(x, groups: int):
    _check_4d(x)
    n, c, h, w = x.shape
    if groups < 1 or c % groups:
        raise ValueError(f"{c} channels not divisible into {groups} groups")
    return np.ascontiguousarray(
        x.reshape(n, groups, c // groups, h, w).transpose(0, 2, 1, 3, 4).reshape(n, c, h, w)
    )


def channel_shuffle_backward(dout, groups: int):
    n, c, h, w = dout.shape
    return np.ascontiguousarray(
        dout.reshape(n, c // groups, groups, h, w).transpose(0, 2, 1, 3, 4).reshape(n, c, h, w)
    )


def maxpool2d_3x3_s1(x):
    """3x3 stride-1 max filter; borders padded with -inf."""
    xp = np.pad(x, [(0, 0)] * (x.ndim - 2) + [(1, 1), (1, 1)], constant_values=-np.inf)
    h, w = x.shape[-2:]
    out = xp[..., 0:h, 0:w].copy()
    for i in range(3):
        for j in range(3):
            np.maximum(out, xp[..., i:i + h, j:j + w], out=out)
    return out


def mse_loss(pred, target):
    """Mean squared error over every element and its gradient w.r.t. ``pred``."""
    if pred.shape != target.shape:
        raise ValueError(f"prediction shape {pred.shape} != target shape {target.shape}")
    diff = pred - target
    return float(np.mean(diff * diff)), (2.0 / diff.size) * diff
