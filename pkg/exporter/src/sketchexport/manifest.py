"""Turn raw photo/sketch folders plus eye annotations into a manifest.

Pairs correspond by filename stem: ``photos/f-005.jpg`` matches
``sketches/f-005.png``.  A photo with no sketch is a test photo and gets
a dash placeholder.  Eye annotations are consumed from a text file, one
line per stem::

    # stem  left_x left_y right_x right_y
    f-005   112.0 128.5 161.2 127.9

The manifest itself is tab-separated, one record per line: photo path,
sketch path or dash, then the four eye coordinates.  Paths are written
relative to the manifest's directory, which is how the consumer resolves
them.  Nothing is written while problems remain (unmatched sketches,
missing annotations, ambiguous stems); every problem is reported at once.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Dict, List, Tuple

IMAGE_EXTS = (".bmp", ".jpeg", ".jpg", ".pgm", ".png")
PLACEHOLDER = "-"

Eyes = Tuple[float, float, float, float]


@dataclass
class ManifestReport:
    """Outcome of one manifest build: written record count or problems."""

    records: List[str] = field(default_factory=list)
    problems: List[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.problems


def read_annotations(path) -> Dict[str, Eyes]:
    """Parse eye annotations keyed by stem; malformed lines fail loudly."""
    table: Dict[str, Eyes] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            fields = line.split()
            if len(fields) != 5:
                raise ValueError(f"{path}:{lineno}: expected stem and 4 coordinates")
            stem = fields[0]
            if stem in table:
                raise ValueError(f"{path}:{lineno}: duplicate annotation for {stem!r}")
            try:
                lx, ly, rx, ry = (float(v) for v in fields[1:])
            except ValueError:
                raise ValueError(f"{path}:{lineno}: coordinates must be numeric") from None
            table[stem] = (lx, ly, rx, ry)
    return table


def scan_images(directory) -> Tuple[Dict[str, str], List[str]]:
    """Map stem to image path for one directory; ambiguous stems are problems."""
    table: Dict[str, str] = {}
    problems: List[str] = []
    for entry in sorted(os.listdir(directory)):
        path = os.path.join(directory, entry)
        stem, ext = os.path.splitext(entry)
        if not os.path.isfile(path) or ext.lower() not in IMAGE_EXTS:
            continue
        if stem in table:
            problems.append(f"ambiguous stem {stem!r}: {table[stem]} and {path}")
        else:
            table[stem] = path
    return table, problems


def make_manifest(photo_dir, sketch_dir, annotation_path, out_path) -> ManifestReport:
    """Build the manifest for a photo/sketch dataset split.

    The file is written only when every photo has an annotation and every
    sketch has a photo; otherwise the report lists all problems and the
    output is left untouched.  Empty directories produce an empty manifest.
    """
    photos, problems = scan_images(photo_dir)
    sketches, sketch_problems = scan_images(sketch_dir)
    problems += sketch_problems
    annotations = read_annotations(annotation_path)

    for stem in sorted(sketches):
        if stem not in photos:
            problems.append(f"sketch {sketches[stem]} has no matching photo")

    base = os.path.dirname(os.path.abspath(out_path))
    records = []
    for stem in sorted(photos):
        if stem not in annotations:
            problems.append(f"no eye annotation for {stem!r}")
            continue
        photo = os.path.relpath(photos[stem], start=base)
        sketch = os.path.relpath(sketches[stem], start=base) if stem in sketches else PLACEHOLDER
        lx, ly, rx, ry = annotations[stem]
        records.append(f"{photo}\t{sketch}\t{lx:g}\t{ly:g}\t{rx:g}\t{ry:g}")

    report = ManifestReport(records=records, problems=problems)
    if report.ok:
        with open(out_path, "w", encoding="utf-8") as fh:
            for record in records:
                fh.write(record + "\n")
    return report
