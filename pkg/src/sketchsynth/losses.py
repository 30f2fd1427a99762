"""Objective terms for sketch optimization.

Three terms act on extractor taps of the working image X:

* content: unnormalized squared distance between the stride-1 taps of X
  and of the content image, keeping large-scale structure in place;
* style: Gram-matrix mismatch against the assembled target, summed over
  all five taps, each layer scaled by 1 / (4 M^2 N^2) for M spatial cells
  and N channels;
* component: the same Gram form restricted to a fixed face region, which
  sharpens the area between the eyes where alignment is most reliable.

Every term returns its gradient with respect to the taps it touches; the
extractor pulls the combined tap gradients back to image space.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np

from sketchsynth.ops import GramMatrix, gram
from sketchsynth.style import GramSet
from sketchsynth.vgg import (
    STRIDES,
    STYLE_LAYERS,
    FeaturePyramid,
    VggWeights,
    backward_from_steps,
    extract,
    extract_with_steps,
)


def content_term(x_tap: np.ndarray, c_tap: np.ndarray) -> Tuple[float, np.ndarray]:
    """Squared distance between two stride-1 taps and its gradient, 2(X - C)."""
    x_tap = np.asarray(x_tap, dtype=np.float64)
    c_tap = np.asarray(c_tap, dtype=np.float64)
    if x_tap.shape != c_tap.shape:
        raise ValueError(f"tap shapes differ: {x_tap.shape} vs {c_tap.shape}")
    d = x_tap - c_tap
    return float(np.sum(d * d)), 2.0 * d


def content_loss(image: np.ndarray, content: np.ndarray, weights: VggWeights) -> Tuple[float, np.ndarray]:
    """Content term between two images; the gradient is over the image's own tap."""
    x_tap = extract(image, weights).layer("conv1_1")
    c_tap = extract(content, weights).layer("conv1_1")
    return content_term(x_tap, c_tap)


def gram_term(fmap: np.ndarray, target: GramMatrix) -> Tuple[float, np.ndarray]:
    """One layer's Gram mismatch 1/(4 M^2 N^2) * ||G - A||^2 and its tap gradient.

    With D = G - A the gradient is D F / (M^2 N^2), F being the (N, M)
    feature matrix; both G and A must describe the same channel count and
    spatial size.
    """
    g = gram(fmap)
    if g.values.shape != np.shape(target.values):
        raise ValueError(
            f"Gram dimension mismatch: map gives {g.values.shape}, target is {np.shape(target.values)}"
        )
    if g.m != target.m:
        raise ValueError(f"Gram spatial size mismatch: map has m={g.m}, target m={target.m}")
    shape = fmap.shape
    n, m = shape[-3], g.m
    f = np.asarray(fmap, dtype=np.float64).reshape(n, m)
    d = g.values - target.values
    scale = float(m) * float(m) * float(n) * float(n)
    loss = float(np.sum(d * d) / (4.0 * scale))
    grad = (d @ f) / scale
    return loss, grad.reshape(shape)


def style_loss(pyramid: FeaturePyramid, grams: GramSet) -> Tuple[float, Dict[str, np.ndarray]]:
    """Whole-canvas Gram mismatch summed over all five taps."""
    total = 0.0
    tap_grads: Dict[str, np.ndarray] = {}
    for name in STYLE_LAYERS:
        loss, grad = gram_term(pyramid.layer(name), grams.full[name])
        total += loss
        tap_grads[name] = grad
    return total, tap_grads


def component_loss(pyramid: FeaturePyramid, grams: GramSet) -> Tuple[float, Dict[str, np.ndarray]]:
    """Gram mismatch over the face region; gradients vanish outside its footprint."""
    if grams.region is None or grams.region_rect is None:
        raise ValueError("target statistics carry no region; component term unavailable")
    total = 0.0
    tap_grads: Dict[str, np.ndarray] = {}
    for name in STYLE_LAYERS:
        fmap = pyramid.layer(name)
        scaled = grams.region_rect.scaled(STRIDES[name])
        if scaled.bottom > fmap.shape[2] or scaled.right > fmap.shape[3]:
            raise ValueError("region falls outside the feature maps")
        rows, cols = scaled.slices()
        loss, crop_grad = gram_term(fmap[:, :, rows, cols], grams.region[name])
        total += loss
        grad = np.zeros_like(fmap)
        grad[:, :, rows, cols] = crop_grad
        tap_grads[name] = grad
    return total, tap_grads


@dataclass
class LossParts:
    """Weighted term values; total = alpha*content + beta1*style + beta2*component."""

    total: float
    content: float
    style: float
    component: float


class SketchObjective:
    """Total loss and image gradient, packaged for a flat-vector optimizer.

    Calling the objective with a flattened canvas returns (loss, gradient).
    The unweighted term values of the most recent evaluation are kept in
    ``last_parts``; ``parts_for`` re-derives them for an arbitrary point,
    reusing the cache when the point is the one just evaluated.
    """

    def __init__(
        self,
        content_image: np.ndarray,
        grams: GramSet,
        weights: VggWeights,
        alpha: float = 0.004,
        beta1: float = 1.0,
        beta2: float = 0.1,
    ):
        if min(alpha, beta1, beta2) < 0:
            raise ValueError("loss weights must be non-negative")
        if beta2 > 0 and grams.region is None:
            raise ValueError("component weight is positive but the target has no region statistics")
        self.alpha, self.beta1, self.beta2 = float(alpha), float(beta1), float(beta2)
        self.grams = grams
        self.weights = weights
        content_image = np.asarray(content_image, dtype=np.float64)
        if content_image.ndim != 2:
            raise ValueError("content image must be 2-D")
        self.shape = content_image.shape
        self.c_tap = extract(content_image, weights).layer("conv1_1") if alpha > 0 else None
        self.last_parts: Optional[LossParts] = None
        self._cache_key: Optional[bytes] = None

    def _evaluate(self, image: np.ndarray) -> Tuple[float, np.ndarray, LossParts]:
        pyramid, steps = extract_with_steps(image, self.weights)
        tap_grads: Dict[str, np.ndarray] = {}
        c_val = s_val = k_val = 0.0

        def add(name: str, grad: np.ndarray, weight: float):
            scaled = weight * grad
            if name in tap_grads:
                tap_grads[name] = tap_grads[name] + scaled
            else:
                tap_grads[name] = scaled

        if self.alpha > 0:
            c_val, c_grad = content_term(pyramid.layer("conv1_1"), self.c_tap)
            add("conv1_1", c_grad, self.alpha)
        if self.beta1 > 0:
            s_val, s_grads = style_loss(pyramid, self.grams)
            for name, grad in s_grads.items():
                add(name, grad, self.beta1)
        if self.beta2 > 0:
            k_val, k_grads = component_loss(pyramid, self.grams)
            for name, grad in k_grads.items():
                add(name, grad, self.beta2)
        total = self.alpha * c_val + self.beta1 * s_val + self.beta2 * k_val
        grad_image = backward_from_steps(steps, tap_grads, self.weights)
        return total, grad_image, LossParts(total, c_val, s_val, k_val)

    def __call__(self, x: np.ndarray) -> Tuple[float, np.ndarray]:
        image = np.asarray(x, dtype=np.float64).reshape(self.shape)
        total, grad_image, parts = self._evaluate(image)
        self.last_parts = parts
        self._cache_key = image.tobytes()
        return total, grad_image.ravel()

    def parts_for(self, x: np.ndarray) -> LossParts:
        image = np.asarray(x, dtype=np.float64).reshape(self.shape)
        if self.last_parts is not None and image.tobytes() == self._cache_key:
            return self.last_parts
        _, _, parts = self._evaluate(image)
        return parts


def total_loss(
    image: np.ndarray,
    content_image: np.ndarray,
    grams: GramSet,
    weights: VggWeights,
    alpha: float = 0.004,
    beta1: float = 1.0,
    beta2: float = 0.1,
) -> Tuple[float, np.ndarray, LossParts]:
    """One-shot weighted loss over a 2-D image; returns (loss, image gradient, parts)."""
    objective = SketchObjective(content_image, grams, weights, alpha, beta1, beta2)
    image = np.asarray(image, dtype=np.float64)
    loss, grad = objective(image.ravel())
    return loss, grad.reshape(image.shape), objective.last_parts
