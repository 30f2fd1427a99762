"""Exit codes and diagnostics for the export command line."""

import numpy as np
import pytest

from sketchexport.cli import main
from sketchexport.tensorfile import read_tensors

from test_exporter_manifest import _annotate, _touch
from test_exporter_vgg import make_source


@pytest.fixture
def npz_model(tmp_path):
    path = tmp_path / "model.npz"
    np.savez(path, **make_source(np.random.default_rng(0)))
    return path


def test_no_arguments_is_usage_error(capsys):
    assert main([]) == 1
    assert "usage" in capsys.readouterr().err


def test_unknown_subcommand_is_usage_error(capsys):
    assert main(["frobnicate"]) == 1


def test_export_vgg_writes_file(npz_model, tmp_path, capsys):
    out = tmp_path / "weights.tf"
    assert main(["export-vgg", str(npz_model), str(out)]) == 0
    assert "32 records" in capsys.readouterr().out
    data = read_tensors(out)
    assert len(data.records) == 32
    np.testing.assert_array_equal(data.means, [123.68, 116.779, 103.939])


def test_export_vgg_custom_normalization(npz_model, tmp_path):
    out = tmp_path / "weights.tf"
    code = main(["export-vgg", str(npz_model), str(out), "--means", "0,0,0", "--scale", "1.0"])
    assert code == 0
    data = read_tensors(out)
    np.testing.assert_array_equal(data.means, np.zeros(3))
    assert data.scale == 1.0


def test_export_vgg_malformed_means(npz_model, tmp_path, capsys):
    out = tmp_path / "weights.tf"
    assert main(["export-vgg", str(npz_model), str(out), "--means", "1,2"]) == 2
    assert "--means" in capsys.readouterr().err


def test_export_vgg_missing_source(tmp_path, capsys):
    assert main(["export-vgg", str(tmp_path / "gone.npz"), str(tmp_path / "w.tf")]) == 2
    assert "gone.npz" in capsys.readouterr().err


def test_export_vgg_missing_layer_names_it(tmp_path, capsys):
    source = make_source(np.random.default_rng(1))
    del source["conv4_3.weight"]
    path = tmp_path / "model.npz"
    np.savez(path, **source)
    assert main(["export-vgg", str(path), str(tmp_path / "w.tf")]) == 2
    assert "conv4_3" in capsys.readouterr().err


def test_make_manifest_happy_path(tmp_path, capsys):
    _touch(tmp_path / "photos", "f-001.jpg")
    _touch(tmp_path / "sketches", "f-001.png")
    eyes = _annotate(tmp_path / "eyes.txt", "f-001")
    out = tmp_path / "train.tsv"
    code = main(
        ["make-manifest", str(tmp_path / "photos"), str(tmp_path / "sketches"), str(eyes), str(out)]
    )
    assert code == 0
    assert "1 records" in capsys.readouterr().out
    assert out.exists()


def test_make_manifest_empty_dataset_is_fine(tmp_path):
    _touch(tmp_path / "photos")
    _touch(tmp_path / "sketches")
    eyes = _annotate(tmp_path / "eyes.txt")
    out = tmp_path / "train.tsv"
    code = main(
        ["make-manifest", str(tmp_path / "photos"), str(tmp_path / "sketches"), str(eyes), str(out)]
    )
    assert code == 0
    assert out.read_text() == ""


def test_make_manifest_lists_every_problem(tmp_path, capsys):
    _touch(tmp_path / "photos", "f-001.jpg", "f-002.jpg")
    _touch(tmp_path / "sketches", "f-009.png")
    eyes = _annotate(tmp_path / "eyes.txt", "f-001")
    out = tmp_path / "train.tsv"
    code = main(
        ["make-manifest", str(tmp_path / "photos"), str(tmp_path / "sketches"), str(eyes), str(out)]
    )
    assert code == 2
    err = capsys.readouterr().err
    assert "f-002" in err and "f-009" in err
    assert not out.exists()


def test_make_manifest_missing_annotation_file(tmp_path, capsys):
    _touch(tmp_path / "photos")
    _touch(tmp_path / "sketches")
    out = tmp_path / "train.tsv"
    code = main(
        [
            "make-manifest",
            str(tmp_path / "photos"),
            str(tmp_path / "sketches"),
            str(tmp_path / "gone.txt"),
            str(out),
        ]
    )
    assert code == 2
    assert "gone.txt" in capsys.readouterr().err


def test_make_fixture_reproduces_committed_bytes(tmp_path):
    from test_exporter_fixture import COMMITTED

    out = tmp_path / "fixture.tf"
    assert main(["make-fixture", str(out)]) == 0
    assert out.read_bytes() == COMMITTED.read_bytes()
