"""Convert Cityscapes-style annotation trees into the dataset layout.

Expected input structure (the standard leftImg8bit/gtFine arrangement):

    images_root/<split or .>/<city>/<name>_leftImg8bit.png
    labels_root/<split or .>/<city>/<name>_gtFine_labelIds.png

Label ids are mapped onto the seven internal categories; city ids are
assigned from the sorted city directory names. Images can optionally be
downscaled (labels use nearest neighbour so indices stay exact).
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import DatasetError
from .image import quantize8, write_label_png, write_png
from .synthetic import BUILDING, CATEGORIES, OTHER, PERSON, ROAD, SKY, TRAFFIC_SIGN, VEHICLE, DatasetLayout

# Cityscapes labelIds -> internal categories; anything unlisted is "other".
CITYSCAPES_LABEL_MAP = {
    7: ROAD,
    11: BUILDING,
    19: TRAFFIC_SIGN,  # traffic light
    20: TRAFFIC_SIGN,
    23: SKY,
    24: PERSON,
    25: PERSON,  # rider
    26: VEHICLE,  # car
    27: VEHICLE,  # truck
    28: VEHICLE,  # bus
    29: VEHICLE,  # caravan
    30: VEHICLE,  # trailer
    32: VEHICLE,  # motorcycle
    33: VEHICLE,  # bicycle
}

_IMG_SUFFIX = "_leftImg8bit.png"
_LABEL_SUFFIX = "_gtFine_labelIds.png"


def map_label_ids(label_ids: np.ndarray) -> np.ndarray:
    """Map a Cityscapes labelIds array onto the internal category indices."""
    out = np.full(label_ids.shape, OTHER, dtype=np.int64)
    for src, dst in CITYSCAPES_LABEL_MAP.items():
        out[label_ids == src] = dst
    return out


def _find_pairs(images_root: Path, labels_root: Path):
    pairs = []
    for img_path in sorted(images_root.rglob(f"*{_IMG_SUFFIX}")):
        stem = img_path.name[: -len(_IMG_SUFFIX)]
        rel = img_path.relative_to(images_root).parent
        label_path = labels_root / rel / f"{stem}{_LABEL_SUFFIX}"
        if not label_path.exists():
            raise DatasetError(f"no labelIds file for {img_path.name} (expected {label_path})")
        city = img_path.parent.name
        pairs.append((stem, city, img_path, label_path))
    if not pairs:
        raise DatasetError(f"no *{_IMG_SUFFIX} files under {images_root}")
    return pairs


def convert_cityscapes(
    images_root: str | Path,
    labels_root: str | Path,
    out_dir: str | Path,
    size: int | None = None,
) -> DatasetLayout:
    """Write a DatasetLayout from a Cityscapes-format tree.

    `size`, when given, downscales to size x size (bilinear for images,
    nearest for label maps).
    """
    images_root, labels_root = Path(images_root), Path(labels_root)
    pairs = _find_pairs(images_root, labels_root)
    cities = sorted({city for _, city, _, _ in pairs})
    city_id = {c: i for i, c in enumerate(cities)}

    layout = DatasetLayout(Path(out_dir))
    layout.images_dir.mkdir(parents=True, exist_ok=True)
    layout.labels_dir.mkdir(parents=True, exist_ok=True)

    rows = []
    for stem, city, img_path, label_path in pairs:
        with Image.open(img_path) as im:
            im = im.convert("RGB")
            if size is not None:
                im = im.resize((size, size), Image.BILINEAR)
            img = np.asarray(im, dtype=np.float64).transpose(2, 0, 1) / 255.0
        with Image.open(label_path) as lm:
            if size is not None:
                lm = lm.resize((size, size), Image.NEAREST)
            label_ids = np.asarray(lm, dtype=np.int64)
        name = f"{stem}.png"
        write_png(layout.images_dir / name, quantize8(img))
        write_label_png(layout.labels_dir / name, map_label_ids(label_ids))
        rows.append((name, city_id[city]))

    with layout.cities_csv.open("w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["filename", "city_id"])
        writer.writerows(rows)
    meta = {
        "categories": list(CATEGORIES),
        "generator": {"source": "cityscapes", "cities": cities, "size": size},
        "config_hash": "",
        "placement_shortfalls": [],
    }
    layout.meta_json.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return layout
