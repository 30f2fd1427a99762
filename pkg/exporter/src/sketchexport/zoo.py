"""Read pretrained VGG-19 conv weights and export them for the extractor.

Export applies layout normalization only: tensors are renamed to the
``conv<block>_<n>.weight`` / ``.bias`` convention, upcast to float64 and
written in network order.  The first layer stays RGB (3 input channels);
the consumer folds it for grayscale input itself.

Two source layouts are accepted:

    conv1_1.weight / conv1_1.bias        plain named arrays
    features.0.weight / features.0.bias  torchvision VGG-19 state dict

as either a ``.npz`` archive or a ``.pt``/``.pth`` checkpoint (the latter
needs torch installed; it is imported only when such a file is given).
"""

from __future__ import annotations

from collections import OrderedDict
from typing import Dict, Mapping, Sequence, Tuple

import numpy as np

from sketchexport.tensorfile import write_tensors

_BLOCKS = ((1, 2), (2, 2), (3, 4), (4, 4), (5, 4))

#: All 16 conv layers of the stack, in forward order.
CONV_NAMES = tuple(f"conv{b}_{i}" for b, n in _BLOCKS for i in range(1, n + 1))


def _feature_indices() -> Dict[str, int]:
    # torchvision's nn.Sequential counts every conv, relu and pool module.
    index, out = 0, {}
    for block, n_convs in _BLOCKS:
        for i in range(1, n_convs + 1):
            out[f"conv{block}_{i}"] = index
            index += 2  # the conv itself and its relu
        index += 1  # the pool closing the block
    return out


FEATURE_INDEX = _feature_indices()

#: Input convention of the classic zoo release: pixels scaled to 0..255,
#: then per-channel RGB means subtracted.
ZOO_MEANS = (123.68, 116.779, 103.939)
ZOO_SCALE = 255.0


class MissingLayerError(ValueError):
    """The source model lacks a conv layer the export needs."""

    def __init__(self, layer: str, tried: Sequence[str]):
        self.layer = layer
        super().__init__(f"source is missing {layer} (no {' or '.join(tried)})")


def load_source(path) -> Dict[str, np.ndarray]:
    """Load a source model as a flat name-to-array mapping."""
    text = str(path)
    if text.endswith(".npz"):
        with np.load(path) as archive:
            return {name: np.asarray(archive[name]) for name in archive.files}
    if text.endswith((".pt", ".pth")):
        try:
            import torch
        except ImportError as exc:
            raise ValueError(
                f"reading {text} needs torch installed (or re-save the model as .npz)"
            ) from exc
        state = torch.load(path, map_location="cpu", weights_only=True)
        if isinstance(state, Mapping) and "state_dict" in state:
            state = state["state_dict"]
        if not isinstance(state, Mapping):
            raise ValueError(f"{text} does not contain a state dict")
        return {
            name: value.detach().cpu().numpy()
            for name, value in state.items()
            if hasattr(value, "detach")
        }
    raise ValueError(f"unsupported source format: {text} (expected .npz, .pt or .pth)")


def _lookup(source: Mapping[str, np.ndarray], layer: str, kind: str) -> np.ndarray:
    tried = (f"{layer}.{kind}", f"features.{FEATURE_INDEX[layer]}.{kind}")
    for key in tried:
        if key in source:
            return np.asarray(source[key], dtype=np.float64)
    raise MissingLayerError(layer, tried)


def collect_stack(source: Mapping[str, np.ndarray]) -> "OrderedDict[str, np.ndarray]":
    """Pull all 16 conv layers out of a source mapping, validated and renamed.

    Returns weight and bias records in network order, float64.  Shapes are
    checked against the stack: 3x3 kernels, a 3-channel first layer, and
    each layer's input width equal to the previous layer's output width.
    """
    records: "OrderedDict[str, np.ndarray]" = OrderedDict()
    prev_width = 3
    for layer in CONV_NAMES:
        weight = _lookup(source, layer, "weight")
        bias = _lookup(source, layer, "bias")
        if weight.ndim != 4 or weight.shape[2:] != (3, 3):
            raise ValueError(f"{layer}.weight must be (out, in, 3, 3), got {weight.shape}")
        if weight.shape[1] != prev_width:
            raise ValueError(
                f"{layer}.weight takes {weight.shape[1]} input channels, expected {prev_width}"
            )
        if bias.shape != (weight.shape[0],):
            raise ValueError(f"{layer}.bias must have one value per output channel")
        records[f"{layer}.weight"] = weight
        records[f"{layer}.bias"] = bias
        prev_width = weight.shape[0]
    return records


def export_vgg(
    source_path,
    out_path,
    means: Tuple[float, float, float] = ZOO_MEANS,
    scale: float = ZOO_SCALE,
) -> int:
    """Export a source model's conv stack to a tensor file.

    The zoo's input normalization goes into the header so the consumer
    can reproduce the network's expected input range.  Returns the number
    of records written (16 weights + 16 biases).
    """
    records = collect_stack(load_source(source_path))
    write_tensors(out_path, records, means=means, scale=scale)
    return len(records)
