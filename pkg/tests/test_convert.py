"""Cityscapes-format tree conversion into the dataset layout."""

import numpy as np
import pytest
from PIL import Image

from svia.cli import main
from svia.convert import CITYSCAPES_LABEL_MAP, convert_cityscapes, map_label_ids
from svia.errors import DatasetError
from svia.synthetic import BUILDING, OTHER, PERSON, ROAD, SKY, VEHICLE, load_dataset


def _fake_tree(root, cities=("aachen", "bochum"), per_city=2, hw=(64, 128)):
    rng = np.random.default_rng(0)
    img_root = root / "leftImg8bit" / "train"
    lab_root = root / "gtFine" / "train"
    ids = np.array(sorted(CITYSCAPES_LABEL_MAP) + [0, 1])
    for city in cities:
        (img_root / city).mkdir(parents=True)
        (lab_root / city).mkdir(parents=True)
        for i in range(per_city):
            stem = f"{city}_{i:06d}_000019"
            arr = rng.integers(0, 256, size=(hw[0], hw[1], 3), dtype=np.uint8)
            Image.fromarray(arr, "RGB").save(img_root / city / f"{stem}_leftImg8bit.png")
            labels = rng.choice(ids, size=hw).astype(np.uint8)
            Image.fromarray(labels, "L").save(lab_root / city / f"{stem}_gtFine_labelIds.png")
    return img_root.parent, lab_root.parent


def test_label_id_mapping():
    ids = np.array([[7, 11, 24], [26, 23, 5]], dtype=np.int64)
    mapped = map_label_ids(ids)
    assert mapped.tolist() == [[ROAD, BUILDING, PERSON], [VEHICLE, SKY, OTHER]]


def test_convert_roundtrips_through_loader(tmp_path):
    images, labels = _fake_tree(tmp_path)
    layout = convert_cityscapes(images, labels, tmp_path / "out")
    records = load_dataset(layout.root)
    assert len(records) == 4
    assert sorted({r.city_id for r in records}) == [0, 1]
    # aachen sorts before bochum
    assert records[0].filename.startswith("aachen") and records[0].city_id == 0
    assert all(r.labels.max() < 7 for r in records)


def test_convert_with_downscale(tmp_path):
    images, labels = _fake_tree(tmp_path, per_city=1)
    layout = convert_cityscapes(images, labels, tmp_path / "out", size=32)
    records = load_dataset(layout.root)
    assert records[0].image.shape == (3, 32, 32)
    assert records[0].labels.shape == (32, 32)


def test_missing_label_file(tmp_path):
    images, labels = _fake_tree(tmp_path, per_city=1)
    next(labels.rglob("*_gtFine_labelIds.png")).unlink()
    with pytest.raises(DatasetError, match="no labelIds"):
        convert_cityscapes(images, labels, tmp_path / "out")


def test_empty_tree(tmp_path):
    (tmp_path / "i").mkdir()
    (tmp_path / "l").mkdir()
    with pytest.raises(DatasetError, match="no .*files"):
        convert_cityscapes(tmp_path / "i", tmp_path / "l", tmp_path / "out")


def test_cli_subcommand(tmp_path, capsys):
    images, labels = _fake_tree(tmp_path, per_city=1)
    rc = main(
        [
            "convert-cityscapes",
            "--images",
            str(images),
            "--labels",
            str(labels),
            "--out",
            str(tmp_path / "out"),
            "--size",
            "32",
        ]
    )
    assert rc == 0
    assert "converted 2" in capsys.readouterr().out
