"""Fixed convolutional feature extractor with multi-scale taps.

A 19-layer image-classification stack, truncated after the first conv of
its fifth block, turns a grayscale canvas into five feature maps at
strides 1, 2, 4, 8 and 16.  The weights arrive in a tensor file whose
first layer is folded for single-channel input at load time; the stack is
never trained here, so backprop only flows to the image.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np

from sketchsynth.ops import (
    ConvLayerParams,
    avgpool2x2,
    avgpool2x2_backward,
    conv2d_forward,
    conv2d_input_grad,
    maxpool2x2,
    maxpool2x2_backward,
    relu,
    relu_backward,
)
from sketchsynth.tensorfile import read_tensorfile

_BLOCKS = ((1, 2), (2, 2), (3, 4), (4, 4), (5, 4))

#: All conv layer names of the full stack, in forward order.
CONV_NAMES = tuple(f"conv{b}_{i}" for b, n in _BLOCKS for i in range(1, n + 1))

#: The prefix actually executed: everything through conv5_1.
PREFIX_CONVS = CONV_NAMES[: CONV_NAMES.index("conv5_1") + 1]

_POOL_AFTER = frozenset({"conv1_2", "conv2_2", "conv3_4", "conv4_4"})

#: Tap layers and their downsampling factor relative to the input canvas.
STRIDES = {"conv1_1": 1, "conv2_1": 2, "conv3_1": 4, "conv4_1": 8, "conv5_1": 16}
STYLE_LAYERS = tuple(STRIDES)

CANONICAL_WIDTHS = {name: (64, 128, 256, 512, 512)[int(name[4]) - 1] for name in CONV_NAMES}


@dataclass
class VggWeights:
    """Loaded extractor weights plus the input normalization header."""

    layers: Dict[str, ConvLayerParams]
    means: np.ndarray
    scale: float
    pooling: str = "max"

    @property
    def mean_gray(self) -> float:
        return float(np.mean(self.means))

    def normalize(self, image: np.ndarray) -> np.ndarray:
        return image * self.scale - self.mean_gray


@dataclass
class FeaturePyramid:
    """Post-activation tap maps keyed by layer name, each (1, C, h, w)."""

    maps: Dict[str, np.ndarray]

    def layer(self, name: str) -> np.ndarray:
        return self.maps[name]

    @property
    def canvas(self) -> int:
        return self.maps["conv1_1"].shape[2]


def fold_gray(params: ConvLayerParams) -> ConvLayerParams:
    """Collapse an RGB first layer to one input channel by summing kernels.

    Valid because a replicated gray input makes the three channel responses
    additive: Wr*g + Wg*g + Wb*g = (Wr+Wg+Wb)*g.
    """
    return ConvLayerParams(
        params.weights.sum(axis=1, keepdims=True), params.bias, params.stride, params.pad
    )


def load_vgg_weights(path, pooling: str = "max", strict_widths: bool = False) -> VggWeights:
    """Read extractor weights from a tensor file.

    Expects `<layer>.weight` / `<layer>.bias` records for every prefix
    layer; extra records (deeper layers, metadata) are ignored.  A 3-channel
    first layer is folded for grayscale input.  With strict_widths the
    canonical channel counts are enforced; otherwise any consistent widths
    are accepted, which keeps test fixtures small.
    """
    if pooling not in ("max", "avg"):
        raise ValueError("pooling must be 'max' or 'avg'")
    data = read_tensorfile(path)
    layers: Dict[str, ConvLayerParams] = {}
    prev_width: Optional[int] = None
    for name in PREFIX_CONVS:
        wkey, bkey = f"{name}.weight", f"{name}.bias"
        if wkey not in data.records or bkey not in data.records:
            raise ValueError(f"weights file is missing {wkey} or {bkey}")
        w, b = data.records[wkey], data.records[bkey]
        if w.ndim != 4 or w.shape[2:] != (3, 3):
            raise ValueError(f"{wkey} must be (out, in, 3, 3), got {w.shape}")
        if name == "conv1_1":
            if w.shape[1] == 3:
                params = fold_gray(ConvLayerParams(w, b, 1, "zero"))
            elif w.shape[1] == 1:
                params = ConvLayerParams(w, b, 1, "zero")
            else:
                raise ValueError(f"{wkey} must take 1 or 3 input channels, got {w.shape[1]}")
        else:
            if w.shape[1] != prev_width:
                raise ValueError(
                    f"{wkey} expects {w.shape[1]} input channels but the previous layer"
                    f" produces {prev_width}"
                )
            params = ConvLayerParams(w, b, 1, "zero")
        if b.shape != (w.shape[0],):
            raise ValueError(f"{bkey} must have one value per output channel")
        if strict_widths and w.shape[0] != CANONICAL_WIDTHS[name]:
            raise ValueError(
                f"{wkey} has width {w.shape[0]}, canonical stack needs {CANONICAL_WIDTHS[name]}"
            )
        layers[name] = params
        prev_width = params.out_channels
    return VggWeights(layers=layers, means=data.means, scale=data.scale, pooling=pooling)


def random_vgg_weights(widths=(8, 12, 16, 16, 16), seed: int = 0, pooling: str = "max") -> VggWeights:
    """Random narrow stack with the canonical layout, for tests and demos.

    Weights are scaled by fan-in so activations stay O(1) through all
    thirteen layers; biases are zero, input normalization is the identity.
    """
    if len(widths) != 5:
        raise ValueError("need one width per block")
    rng = np.random.default_rng(seed)
    layers: Dict[str, ConvLayerParams] = {}
    prev = 1
    for name in PREFIX_CONVS:
        width = int(widths[int(name[4]) - 1])
        std = np.sqrt(2.0 / (prev * 9))
        layers[name] = ConvLayerParams(
            rng.normal(0.0, std, (width, prev, 3, 3)), np.zeros(width), 1, "zero"
        )
        prev = width
    return VggWeights(layers=layers, means=np.zeros(3), scale=1.0, pooling=pooling)


def _as_canvas(image: np.ndarray) -> np.ndarray:
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 4:
        if image.shape[:2] != (1, 1):
            raise ValueError("expected a single one-channel image")
        image = image[0, 0]
    if image.ndim != 2:
        raise ValueError(f"image must be 2-D, got shape {image.shape}")
    h, w = image.shape
    if h % 16 or w % 16 or h < 16 or w < 16:
        raise ValueError(f"image sides must be multiples of 16, got {h}x{w}")
    if not np.all(np.isfinite(image)):
        raise ValueError("image contains non-finite values")
    return image[None, None]


def extract_with_steps(image: np.ndarray, weights: VggWeights):
    """Forward pass returning (pyramid, steps); steps drive the backward pass."""
    x = _as_canvas(image)
    cur = weights.normalize(x)
    taps: Dict[str, np.ndarray] = {}
    steps = []
    for name in PREFIX_CONVS:
        pre = conv2d_forward(cur, weights.layers[name])
        steps.append({"kind": "conv", "name": name, "pre": pre, "x_shape": cur.shape})
        cur = relu(pre)
        if name in STRIDES:
            taps[name] = cur
        if name == "conv5_1":
            break
        if name in _POOL_AFTER:
            if weights.pooling == "max":
                pooled, idx = maxpool2x2(cur)
                steps.append({"kind": "pool", "mode": "max", "idx": idx, "in_shape": cur.shape})
            else:
                pooled = avgpool2x2(cur)
                steps.append({"kind": "pool", "mode": "avg", "idx": None, "in_shape": cur.shape})
            cur = pooled
    return FeaturePyramid(maps=taps), steps


def extract(image: np.ndarray, weights: VggWeights) -> FeaturePyramid:
    """Feature pyramid of a grayscale image: post-activation taps at all five scales."""
    pyramid, _ = extract_with_steps(image, weights)
    return pyramid


def first_tap(image: np.ndarray, weights: VggWeights) -> np.ndarray:
    """Post-activation first-layer response of a grayscale image, as (C, H, W).

    Runs normalization, the first convolution and its ReLU only, so the
    image has no size constraint; useful as a cheap check that a loaded
    weights file behaves.
    """
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2:
        raise ValueError(f"image must be 2-D, got shape {image.shape}")
    if not np.all(np.isfinite(image)):
        raise ValueError("image contains non-finite values")
    x = weights.normalize(image)[None, None]
    return relu(conv2d_forward(x, weights.layers["conv1_1"]))[0]


def backward_from_steps(steps, tap_grads: Dict[str, np.ndarray], weights: VggWeights) -> np.ndarray:
    """Pull tap-space gradients back to image space through recorded steps."""
    for name in tap_grads:
        if name not in STRIDES:
            raise ValueError(f"{name!r} is not a tap layer; taps are {sorted(STRIDES)}")
    g: Optional[np.ndarray] = None
    for step in reversed(steps):
        if step["kind"] == "pool":
            if g is not None:
                if step["mode"] == "max":
                    g = maxpool2x2_backward(g, step["idx"], step["in_shape"])
                else:
                    g = avgpool2x2_backward(g, step["in_shape"])
            continue
        name = step["name"]
        if name in tap_grads:
            tg = np.asarray(tap_grads[name], dtype=np.float64)
            if tg.shape != step["pre"].shape:
                raise ValueError(
                    f"gradient for {name} has shape {tg.shape}, tap is {step['pre'].shape}"
                )
            g = tg.copy() if g is None else g + tg
        if g is None:
            continue
        g = relu_backward(step["pre"], g)
        g = conv2d_input_grad(weights.layers[name], g, step["x_shape"])
    if g is None:
        h = steps[0]["x_shape"][2]
        w = steps[0]["x_shape"][3]
        return np.zeros((h, w))
    # Chain through input normalization: d(x*scale - mean)/dx = scale.
    return g[0, 0] * weights.scale


def backprop_to_image(image: np.ndarray, weights: VggWeights, tap_grads: Dict[str, np.ndarray]) -> np.ndarray:
    """Gradient of sum_l <tap_grads[l], extract(image)[l]> with respect to the image."""
    _, steps = extract_with_steps(image, weights)
    return backward_from_steps(steps, tap_grads, weights)
