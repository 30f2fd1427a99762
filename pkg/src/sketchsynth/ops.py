"""Tensor kernels: convolution, pooling, normalization, Gram statistics.

All kernels operate on float64 numpy arrays in NCHW layout and come in
forward/backward pairs.  Backward functions implement the exact adjoint of
the forward computation so that analytic gradients agree with finite
differences to first order.  Nothing here owns parameters; layers are
plain dataclasses and the pipeline threads them through explicitly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

PAD_MODES = ("mirror", "zero", "none")


def _as_f64_nchw(x: np.ndarray, name: str = "input") -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 4:
        raise ValueError(f"{name} must be 4-D (N, C, H, W), got shape {x.shape}")
    return x


@dataclass
class ConvLayerParams:
    """Weights for one conv layer: weights (O, I, k, k), bias (O,)."""

    weights: np.ndarray
    bias: np.ndarray
    stride: int = 1
    pad: str = "mirror"

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weights.ndim != 4:
            raise ValueError(f"conv weights must be 4-D, got shape {self.weights.shape}")
        if self.weights.shape[2] != self.weights.shape[3]:
            raise ValueError("conv kernels must be square")
        if self.weights.shape[2] % 2 != 1:
            raise ValueError("conv kernels must have odd size")
        if self.bias.shape != (self.weights.shape[0],):
            raise ValueError("bias length must equal the output channel count")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")
        if self.pad not in PAD_MODES:
            raise ValueError(f"pad must be one of {PAD_MODES}")

    @property
    def kernel_size(self) -> int:
        return self.weights.shape[2]

    @property
    def in_channels(self) -> int:
        return self.weights.shape[1]

    @property
    def out_channels(self) -> int:
        return self.weights.shape[0]


@dataclass
class RunningStats:
    """Exponential-moving-average statistics for batch normalization."""

    mean: np.ndarray
    var: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.var = np.asarray(self.var, dtype=np.float64)

    @classmethod
    def initial(cls, channels: int) -> "RunningStats":
        return cls(np.zeros(channels), np.ones(channels))


@dataclass
class GramMatrix:
    """Inner products of vectorized feature channels plus the spatial size m."""

    values: np.ndarray
    m: int


def _reflect_indices(size: int, width: int) -> np.ndarray:
    # Reflection without edge duplication: index -1 maps to 1, size maps to size-2.
    idx = np.abs(np.arange(-width, size + width))
    return np.where(idx >= size, 2 * (size - 1) - idx, idx)


def mirror_pad(x: np.ndarray, width: int) -> np.ndarray:
    """Pad the two spatial axes by reflection without repeating the edge row."""
    x = _as_f64_nchw(x)
    if width < 0:
        raise ValueError("pad width must be >= 0")
    if width == 0:
        return x.copy()
    h, w = x.shape[2], x.shape[3]
    if width >= min(h, w):
        raise ValueError(f"pad width {width} must be smaller than both spatial dims {h}x{w}")
    ri = _reflect_indices(h, width)
    ci = _reflect_indices(w, width)
    return x[:, :, ri, :][:, :, :, ci]


def mirror_pad_backward(grad_padded: np.ndarray, width: int, height: int, out_width: int) -> np.ndarray:
    """Adjoint of :func:`mirror_pad`: fold padded-gradient rows back onto their sources."""
    grad_padded = _as_f64_nchw(grad_padded, "grad_padded")
    if width == 0:
        return grad_padded.copy()
    n, c, hp, wp = grad_padded.shape
    if hp != height + 2 * width or wp != out_width + 2 * width:
        raise ValueError("padded gradient shape does not match the stated pad width")
    ri = _reflect_indices(height, width)
    ci = _reflect_indices(out_width, width)
    rows = np.zeros((height, n, c, wp))
    np.add.at(rows, ri, np.moveaxis(grad_padded, 2, 0))
    cols = np.zeros((out_width, height, n, c))
    np.add.at(cols, ci, np.moveaxis(rows, 3, 0))
    return np.transpose(cols, (2, 3, 1, 0))


def _im2col(x_padded: np.ndarray, k: int, stride: int) -> np.ndarray:
    n, c, hp, wp = x_padded.shape
    ho = (hp - k) // stride + 1
    wo = (wp - k) // stride + 1
    sn, sc, sh, sw = x_padded.strides
    view = np.lib.stride_tricks.as_strided(
        x_padded,
        shape=(n, c, k, k, ho, wo),
        strides=(sn, sc, sh, sw, stride * sh, stride * sw),
    )
    return np.ascontiguousarray(view).reshape(n, c * k * k, ho * wo)


def _pad_for_conv(x: np.ndarray, params: ConvLayerParams) -> np.ndarray:
    half = (params.kernel_size - 1) // 2
    if params.pad == "none" or half == 0:
        return x
    if params.pad == "mirror":
        return mirror_pad(x, half)
    return np.pad(x, ((0, 0), (0, 0), (half, half), (half, half)))


def conv2d_forward(x: np.ndarray, params: ConvLayerParams, want_cache: bool = False):
    """Cross-correlate x with the layer weights.

    Returns the output map, or (output, cache) when want_cache is set; the
    cache carries everything :func:`conv2d_backward` needs.
    """
    x = _as_f64_nchw(x)
    if x.shape[1] != params.in_channels:
        raise ValueError(
            f"input has {x.shape[1]} channels, layer expects {params.in_channels}"
        )
    k = params.kernel_size
    xp = _pad_for_conv(x, params)
    if xp.shape[2] < k or xp.shape[3] < k:
        raise ValueError("input is smaller than the kernel after padding")
    cols = _im2col(xp, k, params.stride)
    n = x.shape[0]
    ho = (xp.shape[2] - k) // params.stride + 1
    wo = (xp.shape[3] - k) // params.stride + 1
    w2 = params.weights.reshape(params.out_channels, -1)
    out = np.matmul(w2, cols) + params.bias[:, None]
    out = out.reshape(n, params.out_channels, ho, wo)
    if not want_cache:
        return out
    # Cache the padded input, not the im2col matrix: the column copy is k*k
    # times larger and is only needed for the weight gradient, which can be
    # recomputed from a strided view.
    cache = {
        "params": params,
        "x_shape": x.shape,
        "x_padded": xp,
        "out_hw": (ho, wo),
    }
    return out, cache


def _col2im_input_grad(params: ConvLayerParams, grad_out: np.ndarray, x_shape, padded_hw):
    n, c, h, w = x_shape
    k = params.kernel_size
    stride = params.stride
    ho, wo = grad_out.shape[2], grad_out.shape[3]
    go = grad_out.reshape(n, params.out_channels, ho * wo)
    w2 = params.weights.reshape(params.out_channels, -1)
    grad_cols = np.matmul(w2.T, go).reshape(n, c, k, k, ho, wo)
    grad_padded = np.zeros((n, c) + padded_hw)
    for i in range(k):
        for j in range(k):
            grad_padded[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += grad_cols[:, :, i, j]
    half = (k - 1) // 2
    if params.pad == "none" or half == 0:
        return grad_padded
    if params.pad == "zero":
        return grad_padded[:, :, half : half + h, half : half + w]
    return mirror_pad_backward(grad_padded, half, h, w)


def conv2d_input_grad(params: ConvLayerParams, grad_out: np.ndarray, x_shape) -> np.ndarray:
    """Gradient of a conv output with respect to its input only.

    Needs no forward cache (the input gradient of a convolution does not
    depend on the input), which keeps frozen-network backprop cheap.
    """
    grad_out = _as_f64_nchw(grad_out, "grad_out")
    n, c, h, w = x_shape
    half = (params.kernel_size - 1) // 2 if params.pad != "none" else 0
    padded_hw = (h + 2 * half, w + 2 * half)
    ho = (padded_hw[0] - params.kernel_size) // params.stride + 1
    wo = (padded_hw[1] - params.kernel_size) // params.stride + 1
    if grad_out.shape != (n, params.out_channels, ho, wo):
        raise ValueError("grad_out shape does not match the conv output for x_shape")
    return _col2im_input_grad(params, grad_out, x_shape, padded_hw)


def conv2d_backward(cache: dict, grad_out: np.ndarray):
    """Backward pass of :func:`conv2d_forward`.

    Returns (grad_x, grad_weights, grad_bias) for the cached forward call.
    """
    grad_out = _as_f64_nchw(grad_out, "grad_out")
    params: ConvLayerParams = cache["params"]
    n, c, h, w = cache["x_shape"]
    ho, wo = cache["out_hw"]
    k = params.kernel_size
    stride = params.stride
    if grad_out.shape != (n, params.out_channels, ho, wo):
        raise ValueError("grad_out shape does not match the cached forward output")

    grad_bias = grad_out.sum(axis=(0, 2, 3))
    xp = cache["x_padded"]
    sn, sc, sh, sw = xp.strides
    view = np.lib.stride_tricks.as_strided(
        xp,
        shape=(n, c, k, k, ho, wo),
        strides=(sn, sc, sh, sw, stride * sh, stride * sw),
    )
    grad_w = np.einsum("ncijrs,nors->ocij", view, grad_out)

    grad_x = _col2im_input_grad(params, grad_out, cache["x_shape"], xp.shape[2:])
    return grad_x, grad_w, grad_bias


def maxpool2x2(x: np.ndarray):
    """2x2 max pooling with stride 2; returns (pooled, argmax map).

    The argmax map stores the within-window winner as a row-major index in
    0..3; ties pick the first occurrence in row-major order.
    """
    x = _as_f64_nchw(x)
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ValueError(f"spatial dims must be even for 2x2 pooling, got {h}x{w}")
    windows = x.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5)
    flat = windows.reshape(n, c, h // 2, w // 2, 4)
    idx = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0]
    return out, idx


def maxpool2x2_backward(grad_out: np.ndarray, argmax: np.ndarray, in_shape) -> np.ndarray:
    """Scatter pooled gradients back to the winning input positions."""
    grad_out = _as_f64_nchw(grad_out, "grad_out")
    n, c, h, w = in_shape
    h2, w2 = h // 2, w // 2
    if grad_out.shape != (n, c, h2, w2) or argmax.shape != (n, c, h2, w2):
        raise ValueError("grad_out/argmax shapes do not match the pooled output")
    rows = 2 * np.arange(h2).reshape(1, 1, h2, 1) + argmax // 2
    cols = 2 * np.arange(w2).reshape(1, 1, 1, w2) + argmax % 2
    bi = np.arange(n).reshape(n, 1, 1, 1)
    ci = np.arange(c).reshape(1, c, 1, 1)
    grad_x = np.zeros((n, c, h, w))
    # Pool windows are disjoint, so plain fancy assignment never collides.
    grad_x[bi, ci, rows, cols] = grad_out
    return grad_x


def avgpool2x2(x: np.ndarray) -> np.ndarray:
    """2x2 average pooling with stride 2."""
    x = _as_f64_nchw(x)
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ValueError(f"spatial dims must be even for 2x2 pooling, got {h}x{w}")
    return x.reshape(n, c, h // 2, 2, w // 2, 2).mean(axis=(3, 5))


def avgpool2x2_backward(grad_out: np.ndarray, in_shape) -> np.ndarray:
    """Spread each pooled gradient evenly over its 2x2 window."""
    grad_out = _as_f64_nchw(grad_out, "grad_out")
    n, c, h, w = in_shape
    if grad_out.shape != (n, c, h // 2, w // 2):
        raise ValueError("grad_out shape does not match the pooled output")
    g = grad_out / 4.0
    return np.repeat(np.repeat(g, 2, axis=2), 2, axis=3)


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(np.asarray(x, dtype=np.float64), 0.0)


def relu_backward(x: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    """Gate gradients by the pre-activation sign; the kink at 0 passes 0."""
    return np.asarray(grad_out, dtype=np.float64) * (np.asarray(x) > 0)


def batchnorm_forward(
    x: np.ndarray,
    gamma: np.ndarray,
    beta: np.ndarray,
    running: RunningStats,
    train: bool,
    momentum: float = 0.9,
    eps: float = 1e-5,
):
    """Per-channel batch normalization.

    Returns (y, cache, updated running stats).  In train mode the batch
    statistics normalize and the running stats decay toward them
    (new = momentum * old + (1 - momentum) * batch); in inference mode the
    running stats normalize and are returned unchanged.
    """
    x = _as_f64_nchw(x)
    gamma = np.asarray(gamma, dtype=np.float64)
    beta = np.asarray(beta, dtype=np.float64)
    c = x.shape[1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ValueError("gamma/beta must be per-channel vectors")
    if train:
        mean = x.mean(axis=(0, 2, 3))
        var = x.var(axis=(0, 2, 3))
        new_running = RunningStats(
            momentum * running.mean + (1.0 - momentum) * mean,
            momentum * running.var + (1.0 - momentum) * var,
        )
    else:
        mean, var = running.mean, running.var
        new_running = running
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x - mean[None, :, None, None]) * inv[None, :, None, None]
    y = gamma[None, :, None, None] * xhat + beta[None, :, None, None]
    cache = {"xhat": xhat, "inv": inv, "gamma": gamma, "train": train, "n": x.shape[0] * x.shape[2] * x.shape[3]}
    return y, cache, new_running


def batchnorm_backward(cache: dict, grad_out: np.ndarray):
    """Backward pass of :func:`batchnorm_forward`; returns (dx, dgamma, dbeta)."""
    dy = _as_f64_nchw(grad_out, "grad_out")
    xhat, inv, gamma = cache["xhat"], cache["inv"], cache["gamma"]
    axes = (0, 2, 3)
    dgamma = (dy * xhat).sum(axis=axes)
    dbeta = dy.sum(axis=axes)
    dxhat = dy * gamma[None, :, None, None]
    if not cache["train"]:
        return dxhat * inv[None, :, None, None], dgamma, dbeta
    n = cache["n"]
    sum_dxhat = dxhat.sum(axis=axes)[None, :, None, None]
    sum_dxhat_xhat = (dxhat * xhat).sum(axis=axes)[None, :, None, None]
    dx = (inv[None, :, None, None] / n) * (n * dxhat - sum_dxhat - xhat * sum_dxhat_xhat)
    return dx, dgamma, dbeta


def gram(fmap: np.ndarray) -> GramMatrix:
    """Gram matrix of a single feature map: G[i, j] = <channel i, channel j>.

    Accepts (C, H, W) or (1, C, H, W).  The result is exactly symmetric.
    """
    fmap = np.asarray(fmap, dtype=np.float64)
    if fmap.ndim == 4:
        if fmap.shape[0] != 1:
            raise ValueError("gram expects a single feature map, not a batch")
        fmap = fmap[0]
    if fmap.ndim != 3:
        raise ValueError(f"feature map must be (C, H, W), got shape {fmap.shape}")
    c, h, w = fmap.shape
    f = fmap.reshape(c, h * w)
    g = f @ f.T
    g = 0.5 * (g + g.T)
    return GramMatrix(values=g, m=h * w)
