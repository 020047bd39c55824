"""Procedural street scenes with free ground-truth labels and city ids.

Scenes are layered: sky, building blocks, a sidewalk strip, a striped road,
then vehicle / person / traffic-sign sprites. City identity is carried only
by the road and building style parameters; sprites and sky are drawn from
city-independent distributions. With style_jitter > 0 the per-scene style is
blended toward an independent random style (1.0 = fully decorrelated), which
is how the inpainter's city-agnostic training set is produced.
"""

from __future__ import annotations

import colorsys
import csv
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DatasetError, ValidationError
from .image import quantize8, read_label_png, read_png, write_label_png, write_png
from .seeds import derive_seed, make_rng

CATEGORIES = ("sky", "road", "building", "vehicle", "person", "traffic_sign", "other")
SKY, ROAD, BUILDING, VEHICLE, PERSON, TRAFFIC_SIGN, OTHER = range(7)

_SKIN = (0.91, 0.76, 0.65)
_SIGN_COLORS = ((0.85, 0.12, 0.10), (0.10, 0.25, 0.85), (0.95, 0.85, 0.15))


def _hsv(h: float, s: float, v: float) -> tuple[float, float, float]:
    return colorsys.hsv_to_rgb(h % 1.0, s, v)


@dataclass(frozen=True)
class SceneStyle:
    """Road / building appearance; the only carriers of city identity."""

    road_rgb: tuple[float, float, float]
    road_stripe_period: int
    road_stripe_gain: float
    building_palette: tuple[tuple[float, float, float], ...]
    building_window_value: float


def city_style(city_id: int, n_cities: int) -> SceneStyle:
    """Deterministic style for a city: hues spread evenly over the circle."""
    if not 0 <= city_id < n_cities:
        raise ValidationError(f"city_id {city_id} outside [0, {n_cities})")
    hue = (city_id + 0.5) / n_cities
    palette = tuple(
        _hsv(hue + off, 0.55, val) for off, val in ((0.04, 0.72), (0.09, 0.60), (0.13, 0.80))
    )
    return SceneStyle(
        road_rgb=_hsv(hue, 0.50, 0.42),
        road_stripe_period=2 + city_id % 5,
        road_stripe_gain=0.05 + 0.02 * (city_id % 3),
        building_palette=palette,
        building_window_value=0.18,
    )


def random_style(rng: np.random.Generator) -> SceneStyle:
    hue = rng.random()
    palette = tuple(
        _hsv(rng.random(), rng.uniform(0.3, 0.8), rng.uniform(0.4, 0.9)) for _ in range(3)
    )
    return SceneStyle(
        road_rgb=_hsv(hue, rng.uniform(0.2, 0.7), rng.uniform(0.25, 0.6)),
        road_stripe_period=int(rng.integers(2, 7)),
        road_stripe_gain=rng.uniform(0.03, 0.12),
        building_palette=palette,
        building_window_value=rng.uniform(0.1, 0.3),
    )


def _lerp_rgb(a, b, t):
    return tuple(float(v) for v in (1 - t) * np.asarray(a) + t * np.asarray(b))


def blend_style(base: SceneStyle, other: SceneStyle, t: float) -> SceneStyle:
    if t <= 0:
        return base
    if t >= 1:
        return other
    return SceneStyle(
        road_rgb=_lerp_rgb(base.road_rgb, other.road_rgb, t),
        road_stripe_period=int(round((1 - t) * base.road_stripe_period + t * other.road_stripe_period)),
        road_stripe_gain=(1 - t) * base.road_stripe_gain + t * other.road_stripe_gain,
        building_palette=tuple(
            _lerp_rgb(p, q, t) for p, q in zip(base.building_palette, other.building_palette)
        ),
        building_window_value=(1 - t) * base.building_window_value + t * other.building_window_value,
    )


@dataclass(frozen=True)
class SceneSpec:
    height: int
    width: int
    city_id: int
    n_cities: int
    seed: int
    style: SceneStyle
    vehicle_count: int = 2
    person_count: int = 2
    sign_count: int = 1

    def __post_init__(self):
        if self.height < 8 or self.width < 8:
            raise ValidationError("scene size must be at least 8x8")
        if not 0 <= self.city_id < self.n_cities:
            raise ValidationError(f"city_id {self.city_id} outside [0, {self.n_cities})")
        if min(self.vehicle_count, self.person_count, self.sign_count) < 0:
            raise ValidationError("sprite counts must be >= 0")

    @classmethod
    def sample(
        cls,
        city_id: int,
        n_cities: int,
        size: tuple[int, int],
        seed: int,
        style_jitter: float = 0.0,
    ) -> "SceneSpec":
        """Draw counts and (possibly jittered) style deterministically from seed."""
        rng = make_rng(derive_seed(seed, "spec"))
        style = blend_style(city_style(city_id, n_cities), random_style(rng), style_jitter)
        return cls(
            height=size[0],
            width=size[1],
            city_id=city_id,
            n_cities=n_cities,
            seed=seed,
            style=style,
            vehicle_count=int(rng.integers(1, 4)),
            person_count=int(rng.integers(1, 4)),
            sign_count=int(rng.integers(1, 3)),
        )


def _paint_rect(img, labels, r0, r1, c0, c1, rgb, label):
    r0, c0 = max(0, r0), max(0, c0)
    img[:, r0:r1, c0:c1] = np.asarray(rgb, dtype=np.float64)[:, None, None]
    labels[r0:r1, c0:c1] = label


def _boxes_overlap(box, others, margin=1):
    r0, c0, r1, c1 = box
    for (s0, d0, s1, d1) in others:
        if r0 < s1 + margin and s0 < r1 + margin and c0 < d1 + margin and d0 < c1 + margin:
            return True
    return False


def _place_sprites(rng, count, propose, paint, row_range, width, occupied):
    """Place up to `count` sprites with bounded retries; returns placed count."""
    placed = 0
    if row_range[0] >= row_range[1]:
        return 0
    for _ in range(count):
        for _attempt in range(20):
            box = propose(rng, row_range, width)
            if box is None or _boxes_overlap(box, occupied):
                continue
            paint(rng, box)
            occupied.append(box)
            placed += 1
            break
    return placed


def _generate_scene_full(spec: SceneSpec):
    """Render a scene; returns (image, labels, placement info)."""
    h, w = spec.height, spec.width
    st = spec.style
    rng = make_rng(derive_seed(spec.seed, "scene"))
    img = np.zeros((3, h, w), dtype=np.float64)
    labels = np.full((h, w), SKY, dtype=np.int64)

    # Sky gradient with city-independent brightness jitter.
    sky_jit = rng.uniform(-0.03, 0.03)
    top = np.array([0.55, 0.72, 0.95]) + sky_jit
    bot = np.array([0.76, 0.86, 0.98]) + sky_jit
    t = np.linspace(0.0, 1.0, h)[None, :, None]
    img[:] = (1 - t) * top[:, None, None] + t * bot[:, None, None]

    y_road = int(rng.integers(int(0.55 * h), int(0.70 * h) + 1))
    sidewalk_h = int(rng.integers(2, max(3, h // 16) + 1))
    y_side = max(2, y_road - sidewalk_h)

    # Building blocks span the full width above the sidewalk.
    pool = np.arange(4, max(5, w - 3))
    n_blocks = min(int(rng.integers(3, 6)), len(pool) + 1)
    cuts = np.sort(rng.choice(pool, size=n_blocks - 1, replace=False)) if n_blocks > 1 else []
    edges = [0, *[int(c) for c in cuts], w]
    for b in range(n_blocks):
        c0, c1 = edges[b], edges[b + 1]
        t_b = int(rng.integers(int(0.08 * h), int(0.45 * h) + 1))
        rgb = np.asarray(st.building_palette[b % len(st.building_palette)])
        rgb = np.clip(rgb + rng.uniform(-0.04, 0.04), 0.0, 1.0)
        _paint_rect(img, labels, t_b, y_side, c0, c1, rgb, BUILDING)
        # Window grid, still labelled building.
        img[:, t_b + 2 : y_side : 3, c0 + 1 : c1 : 3] = st.building_window_value

    side_gray = 0.55 + rng.uniform(-0.04, 0.04)
    _paint_rect(img, labels, y_side, y_road, 0, w, (side_gray,) * 3, OTHER)

    # Road: striped texture rows plus a dashed centre line.
    road = np.asarray(st.road_rgb, dtype=np.float64)
    rows = np.arange(y_road, h)
    stripe = (((rows - y_road) // max(1, st.road_stripe_period)) % 2).astype(np.float64)
    shade = (stripe * 2.0 - 1.0) * st.road_stripe_gain
    img[:, y_road:, :] = np.clip(road[:, None, None] + shade[None, :, None], 0.0, 1.0)
    labels[y_road:, :] = ROAD
    mid = (y_road + h) // 2
    dash = (np.arange(w) // 4) % 2 == 0
    img[:, mid, dash] = 0.85

    occupied: list[tuple[int, int, int, int]] = []

    def propose_vehicle(rng, row_range, width):
        bw = int(rng.integers(8, 15))
        bh = int(rng.integers(4, 7))
        if width - bw - 1 <= 1:
            return None
        base = int(rng.integers(row_range[0], row_range[1]))
        c0 = int(rng.integers(1, width - bw - 1))
        return (max(0, base - bh - 2), c0, base + 1, c0 + bw)

    def paint_vehicle(rng, box):
        r0, c0, r1, c1 = box
        body_rgb = _hsv(rng.random(), 0.7, 0.8)
        _paint_rect(img, labels, r0 + 2, r1 - 1, c0, c1, body_rgb, VEHICLE)
        cab_w = max(2, (c1 - c0) // 2)
        cab_c0 = c0 + (c1 - c0 - cab_w) // 2
        _paint_rect(img, labels, r0, r0 + 2, cab_c0, cab_c0 + cab_w, tuple(v * 0.8 for v in body_rgb), VEHICLE)
        for wc in (c0 + 1, c1 - 3):
            _paint_rect(img, labels, r1 - 1, r1, wc, wc + 2, (0.05, 0.05, 0.05), VEHICLE)

    def propose_person(rng, row_range, width):
        pw = int(rng.integers(2, 4))
        body_h = int(rng.integers(3, 6))
        if width - pw - 1 <= 1:
            return None
        base = int(rng.integers(row_range[0], row_range[1]))
        c0 = int(rng.integers(1, width - pw - 1))
        return (max(0, base - body_h - 2), c0, base + 1, c0 + pw)

    def paint_person(rng, box):
        r0, c0, r1, c1 = box
        shirt = _hsv(rng.random(), 0.6, 0.7)
        _paint_rect(img, labels, r0 + 2, r1, c0, c1, shirt, PERSON)
        _paint_rect(img, labels, r0, r0 + 2, c0, min(c0 + 2, c1), _SKIN, PERSON)

    def propose_sign(rng, row_range, width):
        head = int(rng.integers(3, 5))
        pole = int(rng.integers(3, 6))
        if width - head - 1 <= 1:
            return None
        base = int(rng.integers(row_range[0], row_range[1]))
        c0 = int(rng.integers(1, width - head - 1))
        return (max(0, base - pole - head), c0, base + 1, c0 + head)

    def paint_sign(rng, box):
        r0, c0, r1, c1 = box
        head = c1 - c0
        color = _SIGN_COLORS[int(rng.integers(0, len(_SIGN_COLORS)))]
        _paint_rect(img, labels, r0, r0 + head, c0, c1, color, TRAFFIC_SIGN)
        pole_c = c0 + head // 2
        _paint_rect(img, labels, r0 + head, r1, pole_c, pole_c + 1, (0.25, 0.25, 0.25), TRAFFIC_SIGN)

    road_rows = (min(y_road + 2, h - 1), h)
    side_rows = (y_side, min(y_road + 2, h - 1))
    placed_v = _place_sprites(rng, spec.vehicle_count, propose_vehicle, paint_vehicle, road_rows, w, occupied)
    placed_p = _place_sprites(rng, spec.person_count, propose_person, paint_person, side_rows, w, occupied)
    placed_s = _place_sprites(rng, spec.sign_count, propose_sign, paint_sign, side_rows, w, occupied)

    info = {
        "vehicle": (spec.vehicle_count, placed_v),
        "person": (spec.person_count, placed_p),
        "traffic_sign": (spec.sign_count, placed_s),
    }
    return quantize8(np.clip(img, 0.0, 1.0)), labels, info


def generate_scene(spec: SceneSpec) -> tuple[np.ndarray, np.ndarray]:
    """Render one scene: (image tensor, per-pixel category index map)."""
    img, labels, _ = _generate_scene_full(spec)
    return img, labels


@dataclass
class DatasetLayout:
    root: Path
    images_dir: Path = field(init=False)
    labels_dir: Path = field(init=False)
    cities_csv: Path = field(init=False)
    meta_json: Path = field(init=False)

    def __post_init__(self):
        self.root = Path(self.root)
        self.images_dir = self.root / "images"
        self.labels_dir = self.root / "labels"
        self.cities_csv = self.root / "cities.csv"
        self.meta_json = self.root / "meta.json"


def generate_dataset(
    n_images: int,
    n_cities: int,
    size: tuple[int, int],
    seed: int,
    out_dir: str | Path,
    style_jitter: float = 0.0,
) -> DatasetLayout:
    """Write a balanced synthetic dataset; deterministic in seed."""
    if n_cities < 2:
        raise ValidationError(f"n_cities must be >= 2, got {n_cities}")
    if n_images < 0:
        raise ValidationError("n_images must be >= 0")
    if not 0.0 <= style_jitter <= 1.0:
        raise ValidationError("style_jitter must be in [0, 1]")
    layout = DatasetLayout(Path(out_dir))
    layout.images_dir.mkdir(parents=True, exist_ok=True)
    layout.labels_dir.mkdir(parents=True, exist_ok=True)

    params = {
        "n_images": n_images,
        "n_cities": n_cities,
        "size": list(size),
        "seed": seed,
        "style_jitter": style_jitter,
    }
    config_hash = hashlib.sha256(json.dumps(params, sort_keys=True).encode()).hexdigest()

    rows = []
    shortfalls = []
    for i in range(n_images):
        city = i % n_cities
        spec = SceneSpec.sample(
            city_id=city,
            n_cities=n_cities,
            size=size,
            seed=derive_seed(seed, "scene", i),
            style_jitter=style_jitter,
        )
        img, labels, info = _generate_scene_full(spec)
        name = f"scene_{i:05d}.png"
        write_png(layout.images_dir / name, img)
        write_label_png(layout.labels_dir / name, labels)
        rows.append((name, city))
        for cat, (req, got) in info.items():
            if got < req:
                shortfalls.append({"filename": name, "category": cat, "requested": req, "placed": got})

    with layout.cities_csv.open("w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["filename", "city_id"])
        writer.writerows(rows)

    meta = {
        "categories": list(CATEGORIES),
        "generator": params,
        "config_hash": config_hash,
        "placement_shortfalls": shortfalls,
    }
    layout.meta_json.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return layout


@dataclass
class SceneRecord:
    image: np.ndarray
    labels: np.ndarray
    city_id: int
    filename: str


def load_dataset(root: str | Path) -> list[SceneRecord]:
    """Load a DatasetLayout, validating its invariants; filename-sorted."""
    layout = DatasetLayout(Path(root))
    if not layout.root.exists():
        raise DatasetError(f"dataset root does not exist: {layout.root}")
    if not layout.images_dir.exists():
        raise DatasetError(f"missing images/ under {layout.root}")

    n_categories = len(CATEGORIES)
    if layout.meta_json.exists():
        meta = json.loads(layout.meta_json.read_text())
        n_categories = len(meta.get("categories", CATEGORIES))

    cities: dict[str, int] = {}
    if layout.cities_csv.exists():
        with layout.cities_csv.open() as f:
            reader = csv.reader(f)
            for lineno, row in enumerate(reader, start=1):
                if lineno == 1 and row and row[0] == "filename":
                    continue
                if len(row) != 2:
                    raise DatasetError(f"cities.csv row {lineno}: expected 'filename,city_id', got {row!r}")
                name, cid = row
                if name in cities:
                    raise DatasetError(f"cities.csv row {lineno}: duplicate filename {name!r}")
                try:
                    cities[name] = int(cid)
                except ValueError:
                    raise DatasetError(f"cities.csv row {lineno}: bad city_id {cid!r}") from None

    records = []
    for img_path in sorted(layout.images_dir.glob("*.png")):
        name = img_path.name
        label_path = layout.labels_dir / name
        if not label_path.exists():
            raise DatasetError(f"missing label map for {name}")
        image = read_png(img_path)
        labels = read_label_png(label_path)
        if labels.shape != image.shape[1:]:
            raise DatasetError(f"label size mismatch for {name}: {labels.shape} vs {image.shape[1:]}")
        if labels.max(initial=0) >= n_categories:
            raise DatasetError(f"unknown category index {int(labels.max())} in {name}")
        records.append(SceneRecord(image=image, labels=labels, city_id=cities.get(name, -1), filename=name))
    return records
