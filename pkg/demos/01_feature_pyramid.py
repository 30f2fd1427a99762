"""Walk through the feature extractor and its patch-aligned pyramid columns.

The extractor is a fixed 19-layer conv stack truncated after its fifth
block's first conv.  Feeding it a grayscale canvas yields five tap maps at
strides 1, 2, 4, 8 and 16; because every stride divides 16, the column of
feature crops above any 16x16 image patch has sizes 16, 8, 4, 2 and 1.
That column is the unit all patch matching and style statistics operate on.

Run from the repository root:

    python3 demos/01_feature_pyramid.py
"""

from pathlib import Path

import numpy as np

from sketchsynth.style import crop_column, grid_cells
from sketchsynth.vgg import STRIDES, extract, load_vgg_weights

ROOT = Path(__file__).resolve().parents[1]
WEIGHTS = ROOT / "tests" / "fixtures" / "vgg_fixture.tf"


def main():
    weights = load_vgg_weights(WEIGHTS)
    print(f"loaded reduced-width extractor weights from {WEIGHTS.name}")
    for name, params in weights.layers.items():
        print(f"  {name}: {params.weights.shape[0]} filters on {params.weights.shape[1]} channels")

    # A smooth synthetic canvas; any 96x96 grayscale image works the same.
    gx, gy = np.meshgrid(np.linspace(0, 1, 96), np.linspace(0, 1, 96))
    canvas = 0.5 + 0.3 * np.sin(6 * gx) * np.cos(4 * gy)

    pyramid = extract(canvas, weights)
    print("\ntap maps for a 96x96 canvas:")
    for name, stride in STRIDES.items():
        fmap = pyramid.layer(name)
        print(f"  {name}: shape {fmap.shape}, stride {stride}")

    cells = grid_cells(96, 16)
    print(f"\nthe 16x16 patch grid has {len(cells)} cells; cutting the column above cell (2, 3):")
    column = crop_column(pyramid, 32, 48)
    for name, crop in column.crops.items():
        print(f"  {name}: crop {crop.shape[2]}x{crop.shape[3]}")

    # The crop is literally a slice of the tap map: same memory contents.
    crop = column.crops["conv3_1"]
    stride = STRIDES["conv3_1"]
    manual = pyramid.layer("conv3_1")[:, :, 32 // stride : 32 // stride + 4,
                                      48 // stride : 48 // stride + 4]
    print(f"\nconv3_1 crop equals the manual tap-map slice: {np.array_equal(crop, manual)}")


if __name__ == "__main__":
    main()
