"""Model-free anonymization baselines: blur, pixelate, gray masking.

Each baseline rewrites only the masked region; unmasked pixels come through
bit-identical. Graymask and pixelate are idempotent on their own output.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import ValidationError
from .image import validate_image, validate_mask

BASELINE_KINDS = ("blur", "pixelate", "graymask")


@dataclass(frozen=True)
class BaselineSpec:
    kind: str
    blur_sigma: float = 4.0
    block_size: int = 16
    gray_value: float = 0.5

    def __post_init__(self):
        if self.kind not in BASELINE_KINDS:
            raise ValidationError(f"unknown baseline kind {self.kind!r}; expected one of {BASELINE_KINDS}")
        if self.blur_sigma <= 0:
            raise ValidationError("blur_sigma must be > 0")
        if self.block_size < 2:
            raise ValidationError("block_size must be >= 2")
        if not 0.0 <= self.gray_value <= 1.0:
            raise ValidationError("gray_value must be in [0, 1]")


def _pixelate(x: np.ndarray, sel: np.ndarray, block: int) -> np.ndarray:
    """Replace masked pixels with the mean of masked pixels in their block."""
    _, h, w = x.shape
    bi = np.arange(h) // block
    bj = np.arange(w) // block
    block_id = bi[:, None] * (w // block + 1) + bj[None, :]
    out = x.copy()
    ids = block_id[sel]
    n = int(block_id.max()) + 1
    counts = np.bincount(ids, minlength=n).astype(np.float64)
    for c in range(3):
        sums = np.bincount(ids, weights=x[c][sel], minlength=n)
        means = np.divide(sums, counts, out=np.zeros_like(sums), where=counts > 0)
        ch = out[c]
        ch[sel] = means[ids]
    return out


def apply_baseline(x: np.ndarray, mask: np.ndarray, spec: BaselineSpec) -> np.ndarray:
    """Apply one baseline inside the mask union; outside is untouched."""
    x = validate_image(x)
    mask = validate_mask(mask, x.shape[1:])
    sel = mask.astype(bool)
    if not sel.any():
        return x.copy()
    if spec.kind == "graymask":
        out = x.copy()
        out[:, sel] = spec.gray_value
        return out
    if spec.kind == "blur":
        out = x.copy()
        blurred = np.stack([ndimage.gaussian_filter(x[c], sigma=spec.blur_sigma, mode="reflect") for c in range(3)])
        out[:, sel] = np.clip(blurred[:, sel], 0.0, 1.0)
        return out
    return _pixelate(x, sel, spec.block_size)
