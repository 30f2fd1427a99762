"""End-to-end synthesis: align, content image, style target, optimize.

Each stage runs behind a named guard so failures carry the stage that
produced them.  Intermediate artifacts (content image, style diagnostics,
per-iteration loss log) are written progressively when a debug directory
is given, so a failed run still leaves its partial outputs behind.
"""

from __future__ import annotations

import hashlib
import os
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from sketchsynth.align import AlignResult, align_face, invert_affine, to_gray, warp_affine, warp_back
from sketchsynth.config import SynthesisConfig
from sketchsynth.content import ContentNet
from sketchsynth.imageio import load_image, save_image
from sketchsynth.lbfgs import OptimState, lbfgs_minimize
from sketchsynth.losses import LossParts, SketchObjective
from sketchsynth.manifest import ManifestEntry, load_manifest
from sketchsynth.style import (
    ExemplarSet,
    GramSet,
    PatchRef,
    assemble_target,
    compose_pixel_style,
    match_all,
    target_grams,
)
from sketchsynth.tensorfile import read_tensorfile, write_tensorfile
from sketchsynth.vgg import STYLE_LAYERS, FeaturePyramid, VggWeights, extract, load_vgg_weights


class StageError(RuntimeError):
    """An error attributed to one named pipeline stage."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"stage '{stage}': {message}")
        self.stage = stage


@contextmanager
def _stage(name: str):
    try:
        yield
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, str(exc)) from exc


def load_weights(config: SynthesisConfig) -> VggWeights:
    """Feature-extractor weights from the configured tensor file."""
    path = config.vgg_weights
    if not path:
        raise FileNotFoundError("config has no feature-weight path set")
    if not os.path.exists(path):
        raise FileNotFoundError(f"feature weight file not found: {path}")
    return load_vgg_weights(path, pooling=config.pooling)


def _digest(*parts: bytes) -> str:
    h = hashlib.sha256()
    for p in parts:
        h.update(p)
        h.update(b"\x00")
    return h.hexdigest()[:32]


def _file_digest(path) -> bytes:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).digest()


def _align_pair(entry: ManifestEntry, config: SynthesisConfig) -> Tuple[np.ndarray, np.ndarray, AlignResult]:
    """Align a training photo and warp its sketch through the same transform."""
    photo = load_image(entry.photo)
    res = align_face(
        photo,
        entry.left_eye,
        entry.right_eye,
        size=config.canvas,
        target_left=config.left_eye,
        target_right=config.right_eye,
    )
    sketch_img = to_gray(load_image(entry.sketch))
    if np.shape(sketch_img) != np.shape(to_gray(np.asarray(photo, dtype=np.float64))):
        raise ValueError(f"photo and sketch sizes differ for {entry.photo}")
    sketch = warp_affine(sketch_img, invert_affine(res.matrix), (config.canvas, config.canvas))
    return res.image, sketch, res


def _cached_pyramid(
    sketch: np.ndarray,
    weights: VggWeights,
    config: SynthesisConfig,
    cache_key: Optional[str],
) -> FeaturePyramid:
    if cache_key and config.cache_dir:
        path = os.path.join(config.cache_dir, f"pyr-{cache_key}.tf")
        if os.path.exists(path):
            data = read_tensorfile(path)
            return FeaturePyramid(maps=dict(data.records))
        pyramid = extract(sketch, weights)
        os.makedirs(config.cache_dir, exist_ok=True)
        write_tensorfile(path, {name: pyramid.layer(name) for name in STYLE_LAYERS})
        return pyramid
    return extract(sketch, weights)


def load_exemplars(config: SynthesisConfig, weights: VggWeights) -> ExemplarSet:
    """Aligned training pairs plus sketch pyramids, cached on disk when configured.

    Cache entries are keyed by the weight file, the sketch file, and the
    alignment geometry, so a weight or annotation change invalidates them.
    """
    if not config.manifest:
        raise FileNotFoundError("config has no exemplar manifest path set")
    entries = [e for e in load_manifest(config.manifest) if e.sketch is not None]
    if not entries:
        raise ValueError(f"manifest {config.manifest} lists no photo/sketch pairs")
    weight_digest = _file_digest(config.vgg_weights) if config.vgg_weights else b"none"
    photos, sketches, pyramids = [], [], []
    for entry in entries:
        aligned_photo, aligned_sketch, _ = _align_pair(entry, config)
        geometry = (
            f"{config.canvas},{config.pooling},{config.left_eye},{config.right_eye},"
            f"{entry.left_eye},{entry.right_eye}"
        ).encode()
        key = _digest(weight_digest, _file_digest(entry.sketch), geometry)
        photos.append(aligned_photo)
        sketches.append(aligned_sketch)
        pyramids.append(_cached_pyramid(aligned_sketch, weights, config, key))
    return ExemplarSet(photos=photos, sketches=sketches, pyramids=pyramids)


def _content_image(
    aligned: np.ndarray,
    config: SynthesisConfig,
    content_net: Optional[ContentNet],
    override: Optional[np.ndarray],
) -> np.ndarray:
    if override is not None:
        override = np.asarray(override, dtype=np.float64)
        if override.shape != aligned.shape:
            raise ValueError(
                f"content override shape {override.shape} does not match canvas {aligned.shape}"
            )
        return override
    if content_net is None and config.content_checkpoint:
        content_net = ContentNet.load(config.content_checkpoint)
    if content_net is not None:
        return content_net.predict(aligned)
    # no trained predictor available: the aligned photo stands in, which
    # keeps the pipeline runnable end to end with style-only emphasis
    return aligned.copy()


def _style_target(
    aligned: np.ndarray,
    exemplars: ExemplarSet,
    config: SynthesisConfig,
    weights: VggWeights,
) -> Tuple[GramSet, List[List[PatchRef]], Optional[np.ndarray]]:
    refs = match_all(aligned, exemplars, config)
    composite = None
    if config.style_mode == "pixel":
        composite = compose_pixel_style(refs, exemplars, config)
        pyramid = extract(composite, weights)
    else:
        pyramid = assemble_target(refs, exemplars, config)
    region = config.region if config.beta2 > 0 else None
    return target_grams(pyramid, region=region), refs, composite


@dataclass
class SynthesisResult:
    sketch: np.ndarray
    canvas: np.ndarray
    content: np.ndarray
    aligned_photo: np.ndarray
    matrix: np.ndarray
    state: Optional[OptimState]
    loss_rows: List[Tuple[int, float, float, float, float]]
    matches: Optional[List[List[PatchRef]]]


def _write_loss_log(path, rows) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("iteration\ttotal\tcontent\tstyle\tcomponent\n")
        for row in rows:
            fh.write(f"{row[0]}\t{row[1]:.12g}\t{row[2]:.12g}\t{row[3]:.12g}\t{row[4]:.12g}\n")


def _write_match_table(path, refs) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("cell_row\tcell_col\tpair\trow\tcol\tcost\n")
        for r, row in enumerate(refs):
            for c, ref in enumerate(row):
                fh.write(f"{r}\t{c}\t{ref.pair}\t{ref.row}\t{ref.col}\t{ref.cost:.12g}\n")


def _write_gram_summary(path, grams: GramSet) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("layer\tscope\tchannels\tfrobenius\n")
        for name, g in grams.full.items():
            fh.write(f"{name}\tfull\t{g.values.shape[0]}\t{np.linalg.norm(g.values):.12g}\n")
        for name, g in (grams.region or {}).items():
            fh.write(f"{name}\tregion\t{g.values.shape[0]}\t{np.linalg.norm(g.values):.12g}\n")


def synthesize(
    photo: np.ndarray,
    left_eye: Tuple[float, float],
    right_eye: Tuple[float, float],
    config: SynthesisConfig,
    weights: Optional[VggWeights] = None,
    exemplars: Optional[ExemplarSet] = None,
    content_net: Optional[ContentNet] = None,
    content_image: Optional[np.ndarray] = None,
    debug_dir: Optional[str] = None,
    callback: Optional[Callable[[int, LossParts], None]] = None,
) -> SynthesisResult:
    """Synthesize a sketch for one photo; deterministic for fixed inputs.

    The returned result carries both the optimized canvas (pre-resize) and
    the sketch warped back to the source geometry.  ``content_image``
    overrides the content stage with an explicit canvas-space image, which
    is how fixed-point diagnostics drive the optimizer directly.
    """
    with _stage("config"):
        config = config.validate()
        if debug_dir:
            os.makedirs(debug_dir, exist_ok=True)

    need_style = config.beta1 > 0 or config.beta2 > 0

    with _stage("weights"):
        if weights is None:
            weights = load_weights(config)

    with _stage("exemplars"):
        if need_style and exemplars is None:
            exemplars = load_exemplars(config, weights)
        if need_style and exemplars.canvas != config.canvas:
            raise ValueError(
                f"exemplar canvas {exemplars.canvas} does not match config canvas {config.canvas}"
            )

    with _stage("align"):
        res = align_face(
            photo,
            left_eye,
            right_eye,
            size=config.canvas,
            target_left=config.left_eye,
            target_right=config.right_eye,
        )
        aligned = res.image
        if aligned.shape != (config.canvas, config.canvas):
            raise ValueError(f"aligned image has shape {aligned.shape}")

    with _stage("content"):
        content = _content_image(aligned, config, content_net, content_image)
        if content.shape != aligned.shape:
            raise ValueError(f"content image has shape {content.shape}")
        if content.min() < 0.0 or content.max() > 1.0:
            raise ValueError("content image values fall outside [0, 1]")
        if debug_dir:
            save_image(os.path.join(debug_dir, "content.png"), content)

    grams: Optional[GramSet] = None
    refs: Optional[List[List[PatchRef]]] = None
    with _stage("style"):
        if need_style:
            grams, refs, composite = _style_target(aligned, exemplars, config, weights)
            if debug_dir:
                _write_match_table(os.path.join(debug_dir, "matches.tsv"), refs)
                _write_gram_summary(os.path.join(debug_dir, "target_grams.tsv"), grams)
                if composite is not None:
                    save_image(os.path.join(debug_dir, "pixel_composite.png"), composite)

    loss_rows: List[Tuple[int, float, float, float, float]] = []
    with _stage("optimize"):
        if need_style:
            objective = SketchObjective(
                content_image=content,
                grams=grams,
                weights=weights,
                alpha=config.alpha,
                beta1=config.beta1,
                beta2=config.beta2,
            )
        else:
            objective = SketchObjective(
                content_image=content,
                grams=GramSet(full={}),
                weights=weights,
                alpha=config.alpha,
                beta1=0.0,
                beta2=0.0,
            )
        x0 = content.ravel()
        first = objective.parts_for(x0)
        loss_rows.append((0, first.total, first.content, first.style, first.component))
        if callback is not None:
            callback(0, first)

        def on_iteration(it, x, f, g):
            parts = objective.parts_for(x)
            loss_rows.append((it, parts.total, parts.content, parts.style, parts.component))
            if callback is not None:
                callback(it, parts)

        state = lbfgs_minimize(
            objective,
            x0,
            max_iters=config.max_iters,
            grad_tol=config.grad_tol,
            project=lambda v: np.clip(v, 0.0, 1.0),
            callback=on_iteration,
        )
        canvas_img = state.x.reshape(content.shape)
        if debug_dir:
            _write_loss_log(os.path.join(debug_dir, "loss_log.tsv"), loss_rows)
            save_image(os.path.join(debug_dir, "canvas.png"), canvas_img)

    with _stage("resize"):
        source_gray = to_gray(np.asarray(photo, dtype=np.float64))
        sketch = warp_back(canvas_img, res.matrix, source_gray.shape)
        if sketch.shape != source_gray.shape:
            raise ValueError(f"output shape {sketch.shape} does not match source")

    return SynthesisResult(
        sketch=sketch,
        canvas=canvas_img,
        content=content,
        aligned_photo=aligned,
        matrix=res.matrix,
        state=state,
        loss_rows=loss_rows,
        matches=refs,
    )


def synthesize_file(
    photo_path: str,
    left_eye: Tuple[float, float],
    right_eye: Tuple[float, float],
    config: SynthesisConfig,
    out_path: str,
    **kwargs,
) -> SynthesisResult:
    """File-to-file convenience wrapper around :func:`synthesize`."""
    with _stage("load"):
        photo = load_image(photo_path)
    result = synthesize(photo, left_eye, right_eye, config, **kwargs)
    with _stage("save"):
        save_image(out_path, result.sketch)
    return result


def run_batch(
    manifest_path: str,
    config: SynthesisConfig,
    out_dir: str,
    debug_dir: Optional[str] = None,
) -> List[str]:
    """Synthesize every photo in a manifest; weights and exemplars are shared.

    Photos run one after another so results are reproducible; each entry's
    sketch lands in out_dir named after the photo stem.
    """
    entries = load_manifest(manifest_path)
    if not entries:
        raise ValueError(f"manifest {manifest_path} is empty")
    weights = load_weights(config)
    need_style = config.beta1 > 0 or config.beta2 > 0
    exemplars = load_exemplars(config, weights) if need_style else None
    os.makedirs(out_dir, exist_ok=True)
    outputs = []
    for i, entry in enumerate(entries):
        photo = load_image(entry.photo)
        sub_debug = os.path.join(debug_dir, f"entry{i:03d}") if debug_dir else None
        result = synthesize(
            photo,
            entry.left_eye,
            entry.right_eye,
            config,
            weights=weights,
            exemplars=exemplars,
            debug_dir=sub_debug,
        )
        stem = os.path.splitext(os.path.basename(entry.photo))[0]
        out_path = os.path.join(out_dir, f"{stem}_sketch.png")
        save_image(out_path, result.sketch)
        outputs.append(out_path)
    return outputs
