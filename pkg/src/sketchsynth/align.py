"""Eye-based face alignment.

A similarity transform (rotation, uniform scale, translation) maps the
two annotated eye centers onto fixed canonical points of a square canvas.
Resampling is bilinear with edge replication outside the source frame.
The transform is returned alongside the aligned image so a synthesized
sketch can be warped back into the source geometry afterwards.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np

LUMA_WEIGHTS = (0.299, 0.587, 0.114)


def rgb_to_gray(image: np.ndarray) -> np.ndarray:
    """Luminance of an (H, W, 3) image: 0.299 R + 0.587 G + 0.114 B."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError(f"expected an (H, W, 3) image, got shape {image.shape}")
    return image @ np.asarray(LUMA_WEIGHTS)


def to_gray(image: np.ndarray) -> np.ndarray:
    """Pass 2-D images through; fold RGB to luminance."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 2:
        return image
    return rgb_to_gray(image)


def similarity_from_points(src_a, src_b, dst_a, dst_b) -> np.ndarray:
    """2x3 matrix of the similarity mapping src_a -> dst_a, src_b -> dst_b.

    Solved in the complex plane: w = a z + b with a = (wb - wa)/(zb - za),
    which is the unique rotation + uniform scale + translation through two
    point pairs.
    """
    za = complex(src_a[0], src_a[1])
    zb = complex(src_b[0], src_b[1])
    wa = complex(dst_a[0], dst_a[1])
    wb = complex(dst_b[0], dst_b[1])
    if za == zb:
        raise ValueError("source points must be distinct")
    a = (wb - wa) / (zb - za)
    b = wa - a * za
    return np.array(
        [[a.real, -a.imag, b.real], [a.imag, a.real, b.imag]], dtype=np.float64
    )


def invert_affine(matrix: np.ndarray) -> np.ndarray:
    """Inverse of a 2x3 affine matrix (as another 2x3 matrix)."""
    m = np.asarray(matrix, dtype=np.float64)
    lin = m[:, :2]
    det = lin[0, 0] * lin[1, 1] - lin[0, 1] * lin[1, 0]
    if det == 0.0:
        raise ValueError("affine matrix is singular")
    inv = np.array([[lin[1, 1], -lin[0, 1]], [-lin[1, 0], lin[0, 0]]]) / det
    t = -inv @ m[:, 2]
    return np.hstack([inv, t[:, None]])


def warp_affine(image: np.ndarray, pullback: np.ndarray, out_shape: Tuple[int, int]) -> np.ndarray:
    """Resample with bilinear interpolation under a pull-back affine map.

    pullback maps output (x, y) to source (x, y); samples outside the
    source frame replicate the nearest edge pixel.
    """
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2:
        raise ValueError(f"expected a 2-D image, got shape {image.shape}")
    h_out, w_out = out_shape
    h, w = image.shape
    xs = np.arange(w_out, dtype=np.float64)
    ys = np.arange(h_out, dtype=np.float64)
    gx, gy = np.meshgrid(xs, ys)
    sx = pullback[0, 0] * gx + pullback[0, 1] * gy + pullback[0, 2]
    sy = pullback[1, 0] * gx + pullback[1, 1] * gy + pullback[1, 2]
    # edge replication: clamp the sample point, then interpolate normally
    sx = np.clip(sx, 0.0, w - 1.0)
    sy = np.clip(sy, 0.0, h - 1.0)
    x0 = np.floor(sx).astype(np.intp)
    y0 = np.floor(sy).astype(np.intp)
    x0 = np.minimum(x0, w - 2) if w > 1 else x0
    y0 = np.minimum(y0, h - 2) if h > 1 else y0
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = sx - x0
    fy = sy - y0
    top = image[y0, x0] * (1.0 - fx) + image[y0, x1] * fx
    bottom = image[y1, x0] * (1.0 - fx) + image[y1, x1] * fx
    return top * (1.0 - fy) + bottom * fy


@dataclass(frozen=True)
class AlignResult:
    """Aligned canvas plus the source-to-canvas transform that produced it."""

    image: np.ndarray
    matrix: np.ndarray


def align_face(
    image: np.ndarray,
    left_eye: Tuple[float, float],
    right_eye: Tuple[float, float],
    size: int = 288,
    target_left: Tuple[float, float] = (112.0, 128.0),
    target_right: Tuple[float, float] = (160.0, 128.0),
) -> AlignResult:
    """Align a face image by its eye centers onto a size x size canvas.

    The eyes are ordered by x first, so swapped annotations self-correct.
    RGB images fold to luminance before resampling.  When the transform
    is the identity and the image is already canvas-sized, the pixels
    pass through untouched.
    """
    gray = to_gray(image)
    left = (float(left_eye[0]), float(left_eye[1]))
    right = (float(right_eye[0]), float(right_eye[1]))
    if left == right:
        raise ValueError("eye points must be distinct")
    if left[0] > right[0]:
        left, right = right, left
    h, w = gray.shape
    for name, (ex, ey) in (("left eye", left), ("right eye", right)):
        if not (0 <= ex <= w - 1 and 0 <= ey <= h - 1):
            raise ValueError(f"{name} ({ex}, {ey}) lies outside the {w}x{h} image")
    matrix = similarity_from_points(left, right, target_left, target_right)
    identity = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    if gray.shape == (size, size) and np.allclose(matrix, identity, atol=1e-9):
        return AlignResult(gray.copy(), identity)
    aligned = warp_affine(gray, invert_affine(matrix), (size, size))
    return AlignResult(aligned, matrix)


def warp_back(canvas: np.ndarray, matrix: np.ndarray, out_shape: Tuple[int, int]) -> np.ndarray:
    """Map an aligned canvas back into source geometry.

    matrix is the source-to-canvas transform from align_face; the identity
    with a matching shape passes pixels through untouched.
    """
    identity = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    if np.array_equal(matrix, identity) and canvas.shape == tuple(out_shape):
        return canvas.copy()
    return warp_affine(canvas, matrix, out_shape)
