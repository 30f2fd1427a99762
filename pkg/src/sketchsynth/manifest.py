"""Tab-separated dataset manifests.

One record per line: photo path, sketch path (a dash for photos without
a ground-truth sketch), then the left and right eye centers in source
pixels.  Relative paths resolve against the manifest's directory.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import List, Optional, Tuple

PLACEHOLDER = "-"


@dataclass(frozen=True)
class ManifestEntry:
    photo: str
    sketch: Optional[str]
    left_eye: Tuple[float, float]
    right_eye: Tuple[float, float]


def _resolve(path: str, base: str) -> str:
    return path if os.path.isabs(path) else os.path.normpath(os.path.join(base, path))


def load_manifest(path, check_paths: bool = True) -> List[ManifestEntry]:
    """Parse a manifest file; malformed lines and dangling paths fail loudly."""
    base = os.path.dirname(os.path.abspath(path))
    entries: List[ManifestEntry] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            fields = line.split("\t")
            if len(fields) != 6:
                raise ValueError(
                    f"{path}:{lineno}: expected 6 tab-separated fields, got {len(fields)}"
                )
            photo_field, sketch_field, *coords = fields
            try:
                lx, ly, rx, ry = (float(c) for c in coords)
            except ValueError:
                raise ValueError(f"{path}:{lineno}: eye coordinates must be numeric") from None
            photo = _resolve(photo_field, base)
            sketch = None if sketch_field == PLACEHOLDER else _resolve(sketch_field, base)
            if check_paths:
                for p in filter(None, (photo, sketch)):
                    if not os.path.exists(p):
                        raise FileNotFoundError(f"{path}:{lineno}: missing file {p}")
            entries.append(ManifestEntry(photo, sketch, (lx, ly), (rx, ry)))
    return entries


def save_manifest(path, entries: List[ManifestEntry]) -> None:
    """Write entries in the tab-separated line format."""
    with open(path, "w", encoding="utf-8") as fh:
        for e in entries:
            sketch = e.sketch if e.sketch is not None else PLACEHOLDER
            fh.write(
                f"{e.photo}\t{sketch}\t{e.left_eye[0]:g}\t{e.left_eye[1]:g}"
                f"\t{e.right_eye[0]:g}\t{e.right_eye[1]:g}\n"
            )
