"""Pixel-space primitives.

Images are float64 arrays of shape (3, H, W) with intensities in [0, 1].
Masks are (H, W) arrays of {0, 1}. A MaskSet partitions the image: every
pixel belongs to exactly one category mask.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

from .errors import ValidationError
from .seeds import make_rng

# 4-connectivity: diagonal neighbours do not join components.
_CONN4 = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=np.uint8)


def validate_image(x: np.ndarray, name: str = "image") -> np.ndarray:
    """Check the (3, H, W), [0, 1], H,W >= 8 contract and return x as float64."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3 or x.shape[0] != 3:
        raise ValidationError(f"{name}: expected shape (3, H, W), got {x.shape}")
    _, h, w = x.shape
    if h < 8 or w < 8:
        raise ValidationError(f"{name}: H and W must be >= 8, got {h}x{w}")
    if not np.isfinite(x).all():
        raise ValidationError(f"{name}: non-finite values")
    if x.min() < 0.0 or x.max() > 1.0:
        raise ValidationError(f"{name}: values outside [0, 1]")
    return x


def validate_mask(mask: np.ndarray, shape_hw: tuple[int, int], name: str = "mask") -> np.ndarray:
    """Check a binary (H, W) mask against the expected spatial shape."""
    mask = np.asarray(mask)
    if mask.shape != tuple(shape_hw):
        raise ValidationError(f"{name}: shape {mask.shape} does not match image {tuple(shape_hw)}")
    vals = np.unique(mask)
    if not np.isin(vals, (0, 1)).all():
        raise ValidationError(f"{name}: values must be 0 or 1")
    return mask.astype(np.uint8)


@dataclass
class MaskSet:
    """One-hot per-pixel partition of an image into named categories."""

    masks: np.ndarray  # (n, H, W) uint8
    category_names: list[str]

    def __post_init__(self):
        self.masks = np.asarray(self.masks, dtype=np.uint8)
        if self.masks.ndim != 3:
            raise ValidationError(f"MaskSet: expected (n, H, W) masks, got {self.masks.shape}")
        if self.masks.shape[0] != len(self.category_names):
            raise ValidationError("MaskSet: number of masks does not match category names")
        if len(set(self.category_names)) != len(self.category_names):
            raise ValidationError("MaskSet: duplicate category names")
        if not np.isin(self.masks, (0, 1)).all():
            raise ValidationError("MaskSet: masks must be binary")
        if not (self.masks.sum(axis=0) == 1).all():
            raise ValidationError("MaskSet: masks must be one-hot per pixel")

    @property
    def shape_hw(self) -> tuple[int, int]:
        return self.masks.shape[1], self.masks.shape[2]

    def mask_for(self, name: str) -> np.ndarray:
        try:
            i = self.category_names.index(name)
        except ValueError:
            raise ValidationError(f"MaskSet: unknown category {name!r}") from None
        return self.masks[i]

    def union(self, names: list[str] | tuple[str, ...]) -> np.ndarray:
        out = np.zeros(self.shape_hw, dtype=np.uint8)
        for n in names:
            out |= self.mask_for(n)
        return out


@dataclass(frozen=True)
class SensitiveCategorySet:
    """Ordered category names selected for inpainting."""

    names: tuple[str, ...] = ("person", "vehicle", "traffic_sign", "road", "building")

    def __post_init__(self):
        if len(self.names) == 0:
            raise ValidationError("SensitiveCategorySet: must be nonempty")
        if len(set(self.names)) != len(self.names):
            raise ValidationError("SensitiveCategorySet: duplicate names")

    def check_subset_of(self, maskset: MaskSet) -> None:
        missing = [n for n in self.names if n not in maskset.category_names]
        if missing:
            raise ValidationError(f"sensitive categories not in mask set: {missing}")


def extract_masks(segmap: np.ndarray, n: int, category_names: list[str] | None = None) -> MaskSet:
    """Convert a per-pixel category index map into a one-hot MaskSet."""
    segmap = np.asarray(segmap)
    if segmap.ndim != 2:
        raise ValidationError(f"extract_masks: expected (H, W) index map, got {segmap.shape}")
    if not np.issubdtype(segmap.dtype, np.integer):
        raise ValidationError("extract_masks: index map must be integer-typed")
    if segmap.size and (segmap.min() < 0 or segmap.max() >= n):
        raise ValidationError(f"extract_masks: indices outside [0, {n})")
    if category_names is None:
        category_names = [f"category_{i}" for i in range(n)]
    if len(category_names) != n:
        raise ValidationError("extract_masks: category_names length must equal n")
    masks = (segmap[None, :, :] == np.arange(n)[:, None, None]).astype(np.uint8)
    return MaskSet(masks=masks, category_names=list(category_names))


def laplace_noise(shape: tuple[int, ...], scale: float, rng_seed: int) -> np.ndarray:
    """Seeded Laplace(0, scale) noise via inverse CDF of a Philox stream."""
    if scale <= 0:
        raise ValidationError(f"laplace scale must be > 0, got {scale}")
    rng = make_rng(rng_seed)
    u = rng.random(shape) - 0.5
    return -scale * np.sign(u) * np.log1p(-2.0 * np.abs(u))


def add_masked_laplace(x: np.ndarray, mask: np.ndarray, scale: float, rng_seed: int) -> np.ndarray:
    """Add Laplace(0, scale) noise inside the mask, clamp to [0, 1].

    Pixels with mask 0 are left bit-identical. Noise is independent per
    channel and pixel and is deterministic in the seed.
    """
    x = validate_image(x)
    mask = validate_mask(mask, x.shape[1:])
    noise = laplace_noise(x.shape, scale, rng_seed)
    out = x.copy()
    sel = mask.astype(bool)
    out[:, sel] = np.clip(x[:, sel] + noise[:, sel], 0.0, 1.0)
    return out


def composite(x: np.ndarray, masks: list[np.ndarray], inpainted: list[np.ndarray]) -> np.ndarray:
    """Stitch inpainted regions over x: pixel p takes inpainted[i][p] where
    masks[i][p] = 1 and x[p] where no mask covers it."""
    x = validate_image(x)
    if len(masks) != len(inpainted):
        raise ValidationError("composite: masks and inpainted lists differ in length")
    hw = x.shape[1:]
    cover = np.zeros(hw, dtype=np.int64)
    out = np.zeros_like(x)
    for i, (m, y) in enumerate(zip(masks, inpainted)):
        m = validate_mask(m, hw, name=f"mask[{i}]")
        y = validate_image(y, name=f"inpainted[{i}]")
        if y.shape != x.shape:
            raise ValidationError(f"composite: inpainted[{i}] shape mismatch")
        cover += m
        out += m[None, :, :] * y
    if (cover > 1).any():
        raise ValidationError("composite: overlapping masks")
    uncovered = cover == 0
    out[:, uncovered] = x[:, uncovered]
    return out


def connected_component_boxes(mask: np.ndarray, min_area: int) -> list[tuple[int, int, int, int]]:
    """Bounding boxes (r0, c0, r1, c1), end-exclusive, of 4-connected components
    with area >= min_area, in raster order of each component's first pixel."""
    if min_area < 1:
        raise ValidationError(f"min_area must be >= 1, got {min_area}")
    mask = np.asarray(mask)
    labels, n = ndimage.label(mask != 0, structure=_CONN4)
    if n == 0:
        return []
    areas = ndimage.sum_labels(np.ones_like(labels), labels, index=np.arange(1, n + 1))
    slices = ndimage.find_objects(labels)
    w = mask.shape[1]
    entries = []
    for i, sl in enumerate(slices):
        if sl is None or areas[i] < min_area:
            continue
        rr, cc = np.nonzero(labels[sl] == i + 1)
        rr = rr + sl[0].start
        cc = cc + sl[1].start
        anchor = int(np.min(rr * w + cc))
        entries.append((anchor, (sl[0].start, sl[1].start, sl[0].stop, sl[1].stop)))
    entries.sort(key=lambda e: e[0])
    return [box for _, box in entries]


def connected_person_crops(x: np.ndarray, person_mask: np.ndarray, min_area: int) -> list[np.ndarray]:
    """Axis-aligned crops of x, one per 4-connected component of the mask."""
    x = validate_image(x)
    person_mask = validate_mask(person_mask, x.shape[1:], name="person_mask")
    boxes = connected_component_boxes(person_mask, min_area)
    return [x[:, r0:r1, c0:c1].copy() for (r0, c0, r1, c1) in boxes]


def to_uint8(x: np.ndarray) -> np.ndarray:
    """Quantize [0, 1] intensities to bytes, rounding half-up."""
    return np.floor(np.clip(x, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def quantize8(x: np.ndarray) -> np.ndarray:
    """Snap intensities to the 8-bit grid (b / 255) used by PNG storage."""
    return to_uint8(x).astype(np.float64) / 255.0


def write_png(path: str | Path, x: np.ndarray) -> None:
    """Write an image tensor as 8-bit RGB PNG (byte b <-> intensity b/255)."""
    x = validate_image(x)
    arr = to_uint8(x).transpose(1, 2, 0)
    Image.fromarray(arr, mode="RGB").save(str(path), format="PNG")


def read_png(path: str | Path) -> np.ndarray:
    """Read an 8-bit RGB PNG into a (3, H, W) float64 tensor."""
    with Image.open(str(path)) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float64)
    return arr.transpose(2, 0, 1) / 255.0


def write_label_png(path: str | Path, labels: np.ndarray) -> None:
    """Write a per-pixel category index map as single-channel 8-bit PNG."""
    labels = np.asarray(labels)
    if labels.ndim != 2:
        raise ValidationError(f"label map must be (H, W), got {labels.shape}")
    if labels.min() < 0 or labels.max() > 255:
        raise ValidationError("label indices must fit in a byte")
    Image.fromarray(labels.astype(np.uint8), mode="L").save(str(path), format="PNG")


def read_label_png(path: str | Path) -> np.ndarray:
    with Image.open(str(path)) as im:
        if im.mode != "L":
            im = im.convert("L")
        return np.asarray(im, dtype=np.int64)
