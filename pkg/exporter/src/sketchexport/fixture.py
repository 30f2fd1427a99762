"""Generate the committed extractor test fixture.

Real exported weights are too large to commit, so the repository carries a
reduced-width stand-in drawn from a fixed convention: seed 0, per-block
widths (8, 12, 16, 16, 16), He-scaled kernels, identity normalization in
the header.  The file doubles as a cross-tool contract: it stores an 8x8
test image and the first layer's post-activation response to it, computed
here with a direct convolution.  Any compatible consumer must reproduce
that response from the stored weights.

Rerunning the generator reproduces the committed file byte for byte.
"""

from __future__ import annotations

from collections import OrderedDict

import numpy as np

from sketchexport.tensorfile import write_tensors
from sketchexport.zoo import CONV_NAMES

FIXTURE_SEED = 0
FIXTURE_WIDTHS = (8, 12, 16, 16, 16)
FIXTURE_BIAS_STD = 0.05


def conv3x3_same(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Stride-1 zero-padded 3x3 convolution: (cin, h, w) -> (cout, h, w)."""
    cin, h, w = x.shape
    padded = np.zeros((cin, h + 2, w + 2))
    padded[:, 1:-1, 1:-1] = x
    out = np.empty((weight.shape[0], h, w))
    for co in range(weight.shape[0]):
        acc = np.zeros((h, w))
        for ci in range(cin):
            for ky in range(3):
                for kx in range(3):
                    acc += weight[co, ci, ky, kx] * padded[ci, ky : ky + h, kx : kx + w]
        out[co] = acc + bias[co]
    return out


def fixture_records(seed: int = FIXTURE_SEED, widths=FIXTURE_WIDTHS) -> "OrderedDict[str, np.ndarray]":
    """Draw the 16-layer stack plus the stored image/response contract."""
    rng = np.random.default_rng(seed)
    records: "OrderedDict[str, np.ndarray]" = OrderedDict()
    first = None
    prev = 3
    for name in CONV_NAMES:
        width = int(widths[int(name[4]) - 1])
        std = np.sqrt(2.0 / (prev * 9))
        weight = rng.normal(0.0, std, (width, prev, 3, 3))
        bias = rng.normal(0.0, FIXTURE_BIAS_STD, width)
        records[f"{name}.weight"] = weight
        records[f"{name}.bias"] = bias
        if name == "conv1_1":
            first = (weight, bias)
        prev = width

    image = rng.uniform(0.0, 1.0, (8, 8))
    records["test.image"] = image

    # The header is identity normalization, so the grayscale image feeds the
    # RGB first layer as three replicated channels, then a ReLU.  Consumers
    # that fold the first layer for single-channel input compute the same
    # response, because the three kernel contributions are additive.
    replicated = np.broadcast_to(image, (3, 8, 8))
    records["test.conv1_1"] = np.maximum(conv3x3_same(replicated, *first), 0.0)
    return records


def write_fixture(out_path) -> None:
    """Write the fixture archive with its identity normalization header."""
    write_tensors(out_path, fixture_records(), means=(0.0, 0.0, 0.0), scale=1.0)
