"""One-shot export tooling for the sketch synthesis pipeline.

Everything here runs before synthesis ever starts: exporting pretrained
conv weights into the binary tensor format the extractor loads, building
dataset manifests from raw photo/sketch folders, and regenerating the
committed test fixture.  The tensor file is the only contract shared with
the consumer; nothing imports from it.
"""

from sketchexport.fixture import FIXTURE_SEED, FIXTURE_WIDTHS, fixture_records, write_fixture
from sketchexport.manifest import ManifestReport, make_manifest, read_annotations, scan_images
from sketchexport.tensorfile import (
    TensorArchive,
    TensorFormatError,
    read_tensors,
    write_tensors,
)
from sketchexport.zoo import (
    CONV_NAMES,
    FEATURE_INDEX,
    ZOO_MEANS,
    ZOO_SCALE,
    MissingLayerError,
    collect_stack,
    export_vgg,
    load_source,
)

__all__ = [
    "CONV_NAMES",
    "FEATURE_INDEX",
    "FIXTURE_SEED",
    "FIXTURE_WIDTHS",
    "ManifestReport",
    "MissingLayerError",
    "TensorArchive",
    "TensorFormatError",
    "ZOO_MEANS",
    "ZOO_SCALE",
    "collect_stack",
    "export_vgg",
    "fixture_records",
    "load_source",
    "make_manifest",
    "read_annotations",
    "read_tensors",
    "scan_images",
    "write_fixture",
    "write_tensors",
]
