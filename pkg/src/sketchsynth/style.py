"""Exemplar matching and style-target assembly.

The canvas is divided into a grid of square patches.  Each patch of the
test photo is matched against every exemplar photo over a small set of
nearby grid-aligned offsets, and the winning exemplar's *sketch* supplies
the texture for that cell.  Texture moves between images as pyramid
columns: aligned crops of all five feature maps covering one patch
footprint.  Pasting matched columns cell by cell yields a full-canvas
feature pyramid whose Gram statistics form the style target; pasting
sketch pixels instead (for comparison) yields a style image with visible
seams, which is what the feature-space route exists to avoid.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from sketchsynth.config import Rect, SynthesisConfig
from sketchsynth.ops import GramMatrix, gram
from sketchsynth.vgg import STRIDES, STYLE_LAYERS, FeaturePyramid, VggWeights, extract


@dataclass(frozen=True)
class PatchRef:
    """One match: exemplar pair index plus the patch's pixel offset there."""

    pair: int
    row: int
    col: int
    cost: float


@dataclass
class ExemplarSet:
    """Aligned exemplar pairs: photos to match against, sketches to draw from."""

    photos: List[np.ndarray]
    sketches: List[np.ndarray]
    pyramids: Optional[List[FeaturePyramid]] = None
    _stack: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        if not self.photos:
            raise ValueError("exemplar set must contain at least one pair")
        if len(self.photos) != len(self.sketches):
            raise ValueError("photo and sketch counts differ")
        shape = self.photos[0].shape
        for arr in (*self.photos, *self.sketches):
            if arr.ndim != 2 or arr.shape != shape:
                raise ValueError("all exemplar images must share one 2-D shape")
        if self.pyramids is not None and len(self.pyramids) != len(self.photos):
            raise ValueError("need one feature pyramid per pair")

    def __len__(self) -> int:
        return len(self.photos)

    @property
    def canvas(self) -> int:
        return self.photos[0].shape[0]

    @property
    def photo_stack(self) -> np.ndarray:
        if self._stack is None:
            self._stack = np.stack([np.asarray(p, dtype=np.float64) for p in self.photos])
        return self._stack


def build_exemplar_set(photos, sketches, weights: VggWeights) -> ExemplarSet:
    """Bundle aligned pairs and extract each sketch's feature pyramid."""
    pyramids = [extract(s, weights) for s in sketches]
    return ExemplarSet(list(photos), list(sketches), pyramids)


def grid_cells(canvas: int, patch: int) -> List[Tuple[int, int]]:
    """Row-major (row, col) grid indices; cell (r, c) starts at pixel (patch*r, patch*c)."""
    if canvas % patch:
        raise ValueError("canvas must be a whole number of patches")
    n = canvas // patch
    return [(r, c) for r in range(n) for c in range(n)]


def candidate_offsets(base: int, window: int, step: int, canvas: int, patch: int) -> List[int]:
    """Search offsets for one axis: multiples of step within +-window of base,
    clamped to the valid placement range."""
    lo = -(-(base - window) // step)
    hi = (base + window) // step
    limit = canvas - patch
    return sorted({min(max(m * step, 0), limit) for m in range(lo, hi + 1)})


def match_patch(
    photo: np.ndarray, r: int, c: int, exemplars: ExemplarSet, cfg: SynthesisConfig
) -> PatchRef:
    """Best exemplar patch for grid cell (r, c) by mean squared pixel error.

    Ties go to the smallest (pair, row, col) lexicographically, so repeated
    runs and reordered-but-equal candidates pick the same patch.
    """
    patch, canvas = cfg.patch, exemplars.canvas
    base_r, base_c = patch * r, patch * c
    target = np.asarray(photo, dtype=np.float64)[base_r : base_r + patch, base_c : base_c + patch]
    if target.shape != (patch, patch):
        raise ValueError(f"cell ({r}, {c}) falls outside the photo")
    stack = exemplars.photo_stack
    best: Optional[Tuple[float, int, int, int]] = None
    for ro in candidate_offsets(base_r, cfg.window, cfg.step, canvas, patch):
        for co in candidate_offsets(base_c, cfg.window, cfg.step, canvas, patch):
            block = stack[:, ro : ro + patch, co : co + patch]
            costs = np.mean((block - target) ** 2, axis=(1, 2))
            pair = int(np.argmin(costs))
            key = (float(costs[pair]), pair, ro, co)
            if best is None or key < best:
                best = key
    cost, pair, row, col = best
    return PatchRef(pair=pair, row=row, col=col, cost=cost)


def match_all(photo: np.ndarray, exemplars: ExemplarSet, cfg: SynthesisConfig) -> List[List[PatchRef]]:
    """Match every grid cell; returns refs indexed [row][col]."""
    photo = np.asarray(photo, dtype=np.float64)
    if photo.shape != (exemplars.canvas, exemplars.canvas):
        raise ValueError("photo and exemplars must share the canvas size")
    n = exemplars.canvas // cfg.patch
    return [[match_patch(photo, r, c, exemplars, cfg) for c in range(n)] for r in range(n)]


@dataclass
class PyramidColumn:
    """Crops of all five tap maps over one patch footprint."""

    crops: Dict[str, np.ndarray]


def crop_column(pyramid: FeaturePyramid, row: int, col: int, patch: int = 16) -> PyramidColumn:
    """Cut the column above the patch at pixel (row, col).

    The position and the patch size must be multiples of 16 so the crop
    boundaries land on whole feature cells at every stride.
    """
    if row % 16 or col % 16 or patch % 16:
        raise ValueError("column crops need 16-aligned positions and sizes")
    if row < 0 or col < 0:
        raise ValueError("column position must be non-negative")
    crops: Dict[str, np.ndarray] = {}
    for name in STYLE_LAYERS:
        s = STRIDES[name]
        fmap = pyramid.layer(name)
        r0, c0, size = row // s, col // s, patch // s
        if r0 + size > fmap.shape[2] or c0 + size > fmap.shape[3]:
            raise ValueError("column crop falls outside the feature map")
        crops[name] = fmap[:, :, r0 : r0 + size, c0 : c0 + size]
    return PyramidColumn(crops=crops)


def assemble_target(
    refs: Sequence[Sequence[PatchRef]], exemplars: ExemplarSet, cfg: SynthesisConfig
) -> FeaturePyramid:
    """Paste matched sketch columns into a full-canvas feature pyramid.

    Cell (r, c) of every output map is copied from the matched exemplar's
    column, so the target is built in feature space and patch borders meet
    without pixel-space seams.
    """
    if exemplars.pyramids is None:
        raise ValueError("exemplar set has no feature pyramids; build with build_exemplar_set")
    canvas, patch = exemplars.canvas, cfg.patch
    n = canvas // patch
    if len(refs) != n or any(len(row) != n for row in refs):
        raise ValueError(f"reference grid must be {n}x{n} to cover the canvas")
    maps: Dict[str, np.ndarray] = {}
    for name in STYLE_LAYERS:
        s = STRIDES[name]
        channels = exemplars.pyramids[0].layer(name).shape[1]
        maps[name] = np.zeros((1, channels, canvas // s, canvas // s))
    for r in range(n):
        for c in range(n):
            ref = refs[r][c]
            column = crop_column(exemplars.pyramids[ref.pair], ref.row, ref.col, patch)
            for name in STYLE_LAYERS:
                s = STRIDES[name]
                r0, c0, size = patch * r // s, patch * c // s, patch // s
                maps[name][:, :, r0 : r0 + size, c0 : c0 + size] = column.crops[name]
    return FeaturePyramid(maps=maps)


def compose_pixel_style(
    refs: Sequence[Sequence[PatchRef]], exemplars: ExemplarSet, cfg: SynthesisConfig
) -> np.ndarray:
    """Paste matched sketch *pixels* into one canvas image.

    The pixel-space counterpart of :func:`assemble_target`; its Gram
    statistics carry the pasted patch borders, which show up as a blocky
    result after optimization.
    """
    canvas, patch = exemplars.canvas, cfg.patch
    n = canvas // patch
    if len(refs) != n or any(len(row) != n for row in refs):
        raise ValueError(f"reference grid must be {n}x{n} to cover the canvas")
    out = np.zeros((canvas, canvas))
    for r in range(n):
        for c in range(n):
            ref = refs[r][c]
            sketch = np.asarray(exemplars.sketches[ref.pair], dtype=np.float64)
            out[patch * r : patch * (r + 1), patch * c : patch * (c + 1)] = sketch[
                ref.row : ref.row + patch, ref.col : ref.col + patch
            ]
    return out


@dataclass
class GramSet:
    """Per-layer Gram targets over the whole canvas and, optionally, a face region."""

    full: Dict[str, GramMatrix]
    region: Optional[Dict[str, GramMatrix]] = None
    region_rect: Optional[Rect] = None


def target_grams(pyramid: FeaturePyramid, region: Optional[Rect] = None) -> GramSet:
    """Gram statistics of a target pyramid, whole-canvas plus region crops.

    The region rectangle is given in canvas pixels and must be 16-aligned so
    its footprint lands on whole cells of every tap map.
    """
    full = {name: gram(pyramid.layer(name)) for name in STYLE_LAYERS}
    if region is None:
        return GramSet(full=full)
    region_grams: Dict[str, GramMatrix] = {}
    for name in STYLE_LAYERS:
        s = STRIDES[name]
        scaled = region.scaled(s)
        fmap = pyramid.layer(name)
        if scaled.bottom > fmap.shape[2] or scaled.right > fmap.shape[3]:
            raise ValueError("region falls outside the feature maps")
        rows, cols = scaled.slices()
        region_grams[name] = gram(fmap[:, :, rows, cols])
    return GramSet(full=full, region=region_grams, region_rect=region)
