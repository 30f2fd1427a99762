"""Face sketch synthesis from photo exemplars.

The package synthesizes a pencil-sketch rendering of a face photo by
combining two sources of information: a small feed-forward network that
predicts the sketch's overall content, and texture statistics gathered
from an exemplar set of photo/sketch pairs.  The content image is used as
the starting point of a gradient-based optimization whose objective pulls
feature activations toward the content prediction while matching Gram
statistics of a style target assembled patch-by-patch from the exemplars.
"""

from sketchsynth.ablation import AblationReport, boundary_tv, run_ablation
from sketchsynth.config import PRESETS, Rect, SynthesisConfig, apply_preset
from sketchsynth.content import ContentNet, ContentNetConfig
from sketchsynth.lbfgs import OptimState, lbfgs_minimize
from sketchsynth.losses import SketchObjective
from sketchsynth.ops import (
    ConvLayerParams,
    GramMatrix,
    RunningStats,
    conv2d_backward,
    conv2d_forward,
    gram,
    maxpool2x2,
    maxpool2x2_backward,
    mirror_pad,
    mirror_pad_backward,
    relu,
    relu_backward,
)
from sketchsynth.pipeline import SynthesisResult, run_batch, synthesize, synthesize_file
from sketchsynth.selfcheck import run_selfcheck
from sketchsynth.style import ExemplarSet, build_exemplar_set, crop_column, match_patch
from sketchsynth.tensorfile import read_tensorfile, write_tensorfile
from sketchsynth.vgg import (
    FeaturePyramid,
    VggWeights,
    extract,
    first_tap,
    load_vgg_weights,
    random_vgg_weights,
)

__all__ = [
    "AblationReport",
    "ContentNet",
    "ContentNetConfig",
    "ConvLayerParams",
    "ExemplarSet",
    "FeaturePyramid",
    "GramMatrix",
    "OptimState",
    "PRESETS",
    "Rect",
    "RunningStats",
    "SketchObjective",
    "SynthesisConfig",
    "SynthesisResult",
    "VggWeights",
    "apply_preset",
    "boundary_tv",
    "build_exemplar_set",
    "conv2d_backward",
    "conv2d_forward",
    "crop_column",
    "extract",
    "first_tap",
    "gram",
    "lbfgs_minimize",
    "load_vgg_weights",
    "match_patch",
    "maxpool2x2",
    "maxpool2x2_backward",
    "mirror_pad",
    "mirror_pad_backward",
    "random_vgg_weights",
    "read_tensorfile",
    "relu",
    "relu_backward",
    "run_ablation",
    "run_batch",
    "run_selfcheck",
    "synthesize",
    "synthesize_file",
    "write_tensorfile",
]

__version__ = "0.1.0"
