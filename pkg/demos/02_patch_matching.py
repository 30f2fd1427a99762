"""Show exemplar patch matching and the style target it assembles.

For every 16x16 cell of the test photo, the matcher scans each exemplar
photo over a window around the cell (plus the cell position in every other
exemplar) and keeps the patch with the lowest mean squared pixel error.
The matched exemplar *sketch* columns then become the style target: their
Gram statistics are what synthesis later drives the canvas toward.

Run from the repository root:

    python3 demos/02_patch_matching.py
"""

from pathlib import Path

import numpy as np

from sketchsynth.config import Rect, SynthesisConfig
from sketchsynth.style import build_exemplar_set, grid_cells, match_all, target_grams
from sketchsynth.vgg import load_vgg_weights

ROOT = Path(__file__).resolve().parents[1]
WEIGHTS = ROOT / "tests" / "fixtures" / "vgg_fixture.tf"


def fake_face(seed, size=64):
    """A toy 'face': smooth shading plus two dark eye disks."""
    rng = np.random.default_rng(seed)
    gx, gy = np.meshgrid(np.linspace(0, 1, size), np.linspace(0, 1, size))
    img = 0.55 + 0.25 * gx + 0.1 * rng.uniform(-1, 1)
    for cx, cy in ((size * 0.3, size * 0.4), (size * 0.7, size * 0.4)):
        mask = (gx * size - cx) ** 2 + (gy * size - cy) ** 2 < (size * 0.06) ** 2
        img[mask] = 0.15
    return np.clip(img, 0, 1)


def main():
    weights = load_vgg_weights(WEIGHTS)
    photos = [fake_face(seed) for seed in (1, 2, 3)]
    sketches = [1.0 - 0.8 * p for p in photos]  # stand-in drawings
    exemplars = build_exemplar_set(photos, sketches, weights)
    test_photo = fake_face(9)

    cfg = SynthesisConfig(
        canvas=64,
        window=16,
        region=Rect(16, 16, 32, 32),
        left_eye=(19.0, 26.0),
        right_eye=(45.0, 26.0),
    )

    refs = match_all(test_photo, exemplars, cfg)
    print("best exemplar patch per cell (pair index at each grid position):")
    for row in refs:
        print("  " + " ".join(str(ref.pair) for ref in row))

    costs = [ref.cost for row in refs for ref in row]
    print(f"\n{len(grid_cells(64, 16))} cells matched; "
          f"mean cost {np.mean(costs):.5f}, worst {max(costs):.5f}")

    grams = target_grams(exemplars.pyramids[0], region=cfg.region)
    print("\nstyle statistics are channel-by-channel Gram matrices per tap:")
    for name, g in grams.full.items():
        channels = g.values.shape[0]
        print(f"  {name}: {channels}x{channels} over {g.m} spatial positions")


if __name__ == "__main__":
    main()
