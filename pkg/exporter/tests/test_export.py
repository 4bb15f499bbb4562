"""Exporter pipeline tests.

The interchange contract matters more than the feature values here:
files must parse in the core toolkit, repeat byte for byte, and keep
sorted image order regardless of creation order.
"""

import json
import os
import subprocess

import numpy as np
import pytest
from PIL import Image

from featexport import ExportError, export_features
from featexport.cli import main as cli_main
from featexport.images import discover_images


def _make_image(path, seed, size=(48, 40)):
    rng = np.random.Generator(np.random.PCG64(seed))
    arr = rng.integers(0, 256, size=(size[1], size[0], 3), dtype=np.uint8)
    Image.fromarray(arr, "RGB").save(path)


@pytest.fixture()
def flat_dir(tmp_path):
    d = tmp_path / "imgs"
    d.mkdir()
    # created intentionally out of sorted order
    for name, seed in (("c.png", 3), ("a.png", 1), ("b.jpg", 2), ("notes.txt", 0)):
        if name.endswith(".txt"):
            (d / name).write_text("not an image")
        else:
            _make_image(d / name, seed)
    return str(d)


@pytest.fixture()
def classed_dir(tmp_path):
    d = tmp_path / "byclass"
    d.mkdir()
    for cls, names in (("dog", ["x.png", "y.png"]), ("cat", ["z.png"])):
        (d / cls).mkdir()
        for i, name in enumerate(names):
            _make_image(d / cls / name, seed=hash((cls, i)) % 1000)
    return str(d)


def test_discovery_sorted_and_filtered(flat_dir):
    records = discover_images(flat_dir)
    names = [os.path.basename(r.path) for r in records]
    assert names == ["a.png", "b.jpg", "c.png"]
    assert all(r.class_name is None for r in records)


def test_export_shapes_and_manifest(flat_dir, tmp_path):
    prefix = str(tmp_path / "out")
    manifest = export_features("seeded:16", flat_dir, prefix)
    feats = np.load(manifest.features_path)
    assert feats.shape == (3, 16)
    assert feats.dtype == np.float32
    assert np.isfinite(feats).all()
    assert manifest.labels_path is None
    on_disk = json.loads(open(manifest.manifest_path).read())
    assert on_disk["feature_dim"] == 16
    assert on_disk["image_count"] == 3
    assert on_disk["model"] == "seeded:16"
    assert on_disk["outputs"]["features"] == manifest.features_path
    assert on_disk["outputs"]["labels"] is None
    assert "resize" in on_disk["preprocessing"]


def test_export_twice_identical_bytes(flat_dir, tmp_path):
    p1 = str(tmp_path / "one")
    p2 = str(tmp_path / "two")
    export_features("seeded:8", flat_dir, p1)
    export_features("seeded:8", flat_dir, p2)
    a = open(p1 + "_features.npy", "rb").read()
    b = open(p2 + "_features.npy", "rb").read()
    assert a == b


def test_image_order_not_creation_order(tmp_path):
    d = tmp_path / "imgs"
    d.mkdir()
    _make_image(d / "zzz.png", seed=5)
    _make_image(d / "aaa.png", seed=6)
    prefix = str(tmp_path / "o")
    export_features("seeded:4", str(d), prefix)
    feats = np.load(prefix + "_features.npy")

    d2 = tmp_path / "imgs2"
    d2.mkdir()
    _make_image(d2 / "aaa.png", seed=6)
    _make_image(d2 / "zzz.png", seed=5)
    prefix2 = str(tmp_path / "o2")
    export_features("seeded:4", str(d2), prefix2)
    feats2 = np.load(prefix2 + "_features.npy")
    assert np.array_equal(feats, feats2)


def test_class_subdirs_produce_labels(classed_dir, tmp_path):
    prefix = str(tmp_path / "cl")
    manifest = export_features("seeded:6", classed_dir, prefix)
    labels = np.load(manifest.labels_path)
    # cat sorts before dog; one cat image then two dog images
    assert labels.dtype == np.float32
    assert labels.tolist() == [0.0, 1.0, 1.0]
    assert manifest.image_count == 3


def test_zero_images_is_an_error(tmp_path):
    empty = tmp_path / "empty"
    empty.mkdir()
    with pytest.raises(ExportError, match="no images found"):
        export_features("seeded:8", str(empty), str(tmp_path / "x"))


def test_missing_directory_is_an_error(tmp_path):
    with pytest.raises(ExportError, match="does not exist"):
        export_features("seeded:8", str(tmp_path / "nope"), str(tmp_path / "x"))


def test_bad_model_ids(flat_dir, tmp_path):
    with pytest.raises(ExportError, match="seeded:<dim>"):
        export_features("seeded:lots", flat_dir, str(tmp_path / "x"))
    with pytest.raises(ExportError):
        export_features("definitely_not_a_model_zoo_entry", flat_dir, str(tmp_path / "x"))


def test_same_model_id_same_features_across_dirs(tmp_path):
    # the projection depends on the id, not on the output location
    d = tmp_path / "imgs"
    d.mkdir()
    for i in range(4):
        _make_image(d / f"i{i}.png", seed=20 + i)
    pa = str(tmp_path / "a")
    pb = str(tmp_path / "b")
    export_features("seeded:12", str(d), pa)
    export_features("seeded:12", str(d), pb)
    assert np.array_equal(np.load(pa + "_features.npy"), np.load(pb + "_features.npy"))
    pc = str(tmp_path / "c")
    export_features("seeded:13", str(d), pc)
    assert not np.array_equal(np.load(pa + "_features.npy"), np.load(pc + "_features.npy"))


def test_seeded_loop_shapes_and_finiteness(tmp_path):
    for seed in range(6):
        d = tmp_path / f"case{seed}"
        d.mkdir()
        n = 3 + seed % 3
        for i in range(n):
            _make_image(d / f"img{i}.png", seed=seed * 100 + i, size=(24 + seed, 30))
        prefix = str(d / "out")
        manifest = export_features(f"seeded:{4 + seed}", str(d), prefix)
        feats = np.load(prefix + "_features.npy")
        assert feats.shape == (n, 4 + seed)
        assert np.isfinite(feats).all()
        assert manifest.image_count == n


def test_cli_success_and_error(flat_dir, tmp_path, capsys):
    prefix = str(tmp_path / "cli")
    rc = cli_main(["export", "--model", "seeded:5", "--images", flat_dir,
                   "--out", prefix])
    assert rc == 0
    printed = json.loads(capsys.readouterr().out)
    assert printed["image_count"] == 3
    assert os.path.exists(prefix + "_features.npy")

    rc = cli_main(["export", "--model", "seeded:5",
                   "--images", str(tmp_path / "missing"), "--out", prefix])
    assert rc == 1
    assert "error:" in capsys.readouterr().err


def test_core_toolkit_reads_export(flat_dir, tmp_path):
    # interop goes through the installed command line, not imports
    prefix = str(tmp_path / "interop")
    export_features("seeded:16", flat_dir, prefix)
    feats_file = prefix + "_features.npy"
    proc = subprocess.run(["repsim", "cka", feats_file, feats_file],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert proc.stdout == "1.000000\n"
