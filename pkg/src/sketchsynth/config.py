"""Synthesis configuration: defaults, presets, and a key=value file format."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields
from typing import Tuple


@dataclass(frozen=True)
class Rect:
    """Axis-aligned pixel rectangle; x is the column of the left edge."""

    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        if self.w <= 0 or self.h <= 0:
            raise ValueError("rectangle sides must be positive")

    @property
    def right(self) -> int:
        return self.x + self.w

    @property
    def bottom(self) -> int:
        return self.y + self.h

    def slices(self) -> Tuple[slice, slice]:
        """(row slice, column slice) for indexing 2-D arrays."""
        return slice(self.y, self.bottom), slice(self.x, self.right)

    def scaled(self, stride: int) -> "Rect":
        if any(v % stride for v in (self.x, self.y, self.w, self.h)):
            raise ValueError(f"rectangle {self} is not aligned to stride {stride}")
        return Rect(self.x // stride, self.y // stride, self.w // stride, self.h // stride)


PRESETS = ("default", "wild")


@dataclass
class SynthesisConfig:
    """Every knob of the synthesis pipeline, round-trippable to a text file.

    The defaults reproduce the standard viewing-condition setup: a 288
    canvas of 16-pixel patches, eye anchors a quarter canvas in from each
    side, and loss weights favoring style. The "wild" preset drops the
    component term, which only helps when exemplar faces align well with
    the input.
    """

    alpha: float = 0.004
    beta1: float = 1.0
    beta2: float = 0.1
    canvas: int = 288
    patch: int = 16
    window: int = 16
    step: int = 16
    left_eye: Tuple[float, float] = (112.0, 128.0)
    right_eye: Tuple[float, float] = (160.0, 128.0)
    region: Rect = field(default_factory=lambda: Rect(112, 128, 48, 48))
    max_iters: int = 300
    grad_tol: float = 1e-6
    pooling: str = "max"
    style_mode: str = "feature"
    dog_sigma1: float = 1.0
    dog_sigma2: float = 2.0
    vgg_weights: str = ""
    content_checkpoint: str = ""
    manifest: str = ""
    cache_dir: str = ""
    branch_channels: int = 32
    integrate_channels: Tuple[int, ...] = (64, 64, 32)
    recon_channels: int = 32
    seed: int = 0

    def validate(self) -> "SynthesisConfig":
        if self.canvas <= 0 or self.patch <= 0:
            raise ValueError("canvas and patch must be positive")
        if self.canvas % self.patch:
            raise ValueError("canvas must be a whole number of patches")
        if self.canvas % 16:
            raise ValueError("canvas must be divisible by 16 for the feature pyramid")
        if self.window < 0 or self.step <= 0:
            raise ValueError("window must be >= 0 and step > 0")
        if min(self.alpha, self.beta1, self.beta2) < 0:
            raise ValueError("loss weights must be non-negative")
        if self.pooling not in ("max", "avg"):
            raise ValueError("pooling must be 'max' or 'avg'")
        if self.style_mode not in ("feature", "pixel"):
            raise ValueError("style_mode must be 'feature' or 'pixel'")
        if self.max_iters < 0 or self.grad_tol < 0:
            raise ValueError("max_iters and grad_tol must be >= 0")
        if self.dog_sigma1 <= 0 or self.dog_sigma2 <= self.dog_sigma1:
            raise ValueError("blur widths must satisfy 0 < sigma1 < sigma2")
        r = self.region
        if r.x < 0 or r.y < 0 or r.right > self.canvas or r.bottom > self.canvas:
            raise ValueError("region must lie inside the canvas")
        if any(v % self.patch for v in (r.x, r.y, r.w, r.h)):
            raise ValueError("region must be aligned to the patch grid")
        for ex, ey in (self.left_eye, self.right_eye):
            if not (0 <= ex < self.canvas and 0 <= ey < self.canvas):
                raise ValueError("eye anchors must lie inside the canvas")
        if self.left_eye[0] >= self.right_eye[0]:
            raise ValueError("left eye must be left of the right eye")
        if min(self.branch_channels, self.recon_channels) <= 0 or not self.integrate_channels:
            raise ValueError("content network widths must be positive")
        return self


def apply_preset(cfg: SynthesisConfig, name: str) -> SynthesisConfig:
    """Return a copy of cfg with a named weight preset applied."""
    if name == "default":
        return dataclasses.replace(cfg)
    if name == "wild":
        # Uncontrolled photos rarely align with the exemplars around the
        # nose, so the component term is dropped.
        return dataclasses.replace(cfg, beta2=0.0)
    raise ValueError(f"unknown preset {name!r}; choose from {PRESETS}")


def _format_value(value) -> str:
    if isinstance(value, Rect):
        return f"{value.x},{value.y},{value.w},{value.h}"
    if isinstance(value, tuple):
        return ",".join(_format_value(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse_value(field_obj, text: str):
    name, kind = field_obj.name, field_obj.type
    default = field_obj.default if field_obj.default is not dataclasses.MISSING else None
    text = text.strip()
    if name == "region":
        parts = [int(p) for p in text.split(",")]
        if len(parts) != 4:
            raise ValueError("region needs four integers: x,y,w,h")
        return Rect(*parts)
    if name in ("left_eye", "right_eye"):
        parts = [float(p) for p in text.split(",")]
        if len(parts) != 2:
            raise ValueError(f"{name} needs two numbers: x,y")
        return (parts[0], parts[1])
    if name == "integrate_channels":
        return tuple(int(p) for p in text.split(",") if p.strip())
    if isinstance(default, bool):
        return text.lower() in ("1", "true", "yes")
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float):
        return float(text)
    return text


def save_config(cfg: SynthesisConfig, path) -> None:
    """Write every field as a `key = value` line."""
    lines = [f"{f.name} = {_format_value(getattr(cfg, f.name))}" for f in fields(cfg)]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_config(path, base: SynthesisConfig | None = None) -> SynthesisConfig:
    """Read a key=value file; unknown keys are an error, missing keys keep defaults."""
    cfg = dataclasses.replace(base) if base is not None else SynthesisConfig()
    by_name = {f.name: f for f in fields(SynthesisConfig)}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value', got {raw.rstrip()!r}")
            key, _, value = line.partition("=")
            key = key.strip()
            if key not in by_name:
                raise ValueError(f"{path}:{lineno}: unknown option {key!r}")
            try:
                setattr(cfg, key, _parse_value(by_name[key], value))
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: bad value for {key!r}: {exc}") from exc
    return cfg
