"""Model-free baselines: blur, pixelate, gray masking."""

import numpy as np
import pytest

from svia.baselines import BaselineSpec, apply_baseline
from svia.errors import ValidationError


def _img(rng, h=16, w=16):
    return rng.random((3, h, w))


def _mask(h=16, w=16, full=False):
    m = np.zeros((h, w), dtype=np.uint8)
    if full:
        m[:] = 1
    else:
        m[4:12, 2:14] = 1
    return m


class TestSpecValidation:
    def test_defaults(self):
        s = BaselineSpec(kind="blur")
        assert s.blur_sigma == 4.0 and s.block_size == 16 and s.gray_value == 0.5

    def test_rejects_bad_values(self):
        with pytest.raises(ValidationError):
            BaselineSpec(kind="mosaic")
        with pytest.raises(ValidationError):
            BaselineSpec(kind="blur", blur_sigma=0.0)
        with pytest.raises(ValidationError):
            BaselineSpec(kind="pixelate", block_size=1)
        with pytest.raises(ValidationError):
            BaselineSpec(kind="graymask", gray_value=1.5)


class TestApplyBaseline:
    @pytest.mark.parametrize("kind", ["blur", "pixelate", "graymask"])
    def test_empty_mask_is_identity(self, kind, rng):
        x = _img(rng)
        out = apply_baseline(x, np.zeros((16, 16), dtype=np.uint8), BaselineSpec(kind=kind))
        assert np.array_equal(out, x)

    @pytest.mark.parametrize("kind", ["blur", "pixelate", "graymask"])
    def test_unmasked_region_bit_identical(self, kind, rng):
        x = _img(rng)
        m = _mask()
        out = apply_baseline(x, m, BaselineSpec(kind=kind))
        outside = m == 0
        assert np.array_equal(out[:, outside], x[:, outside])
        assert not np.array_equal(out[:, m == 1], x[:, m == 1])

    def test_graymask_full_constant(self, rng):
        out = apply_baseline(_img(rng), _mask(full=True), BaselineSpec(kind="graymask", gray_value=0.5))
        assert (out == 0.5).all()

    def test_pixelate_single_block_equals_masked_mean(self, rng):
        x = _img(rng)
        m = _mask()
        out = apply_baseline(x, m, BaselineSpec(kind="pixelate", block_size=16))
        sel = m == 1
        for c in range(3):
            assert np.allclose(out[c][sel], x[c][sel].mean(), atol=1e-12)

    def test_pixelate_respects_partial_blocks(self, rng):
        # Mean over masked pixels only, per block.
        x = _img(rng, 8, 8)
        m = np.zeros((8, 8), dtype=np.uint8)
        m[0:2, 0:2] = 1
        out = apply_baseline(x, m, BaselineSpec(kind="pixelate", block_size=4))
        for c in range(3):
            assert np.allclose(out[c][m == 1], x[c, 0:2, 0:2].mean())

    @pytest.mark.parametrize("kind", ["pixelate", "graymask"])
    def test_idempotent(self, kind, rng):
        x = _img(rng)
        m = _mask()
        spec = BaselineSpec(kind=kind, block_size=4)
        once = apply_baseline(x, m, spec)
        twice = apply_baseline(once, m, spec)
        assert np.allclose(once, twice, atol=1e-12)

    def test_blur_not_idempotent(self, rng):
        x = _img(rng, 32, 32)
        m = np.ones((32, 32), dtype=np.uint8)
        spec = BaselineSpec(kind="blur", blur_sigma=2.0)
        once = apply_baseline(x, m, spec)
        twice = apply_baseline(once, m, spec)
        assert not np.allclose(once, twice, atol=1e-6)

    def test_blur_smooths(self, rng):
        x = np.zeros((3, 32, 32))
        x[:, :, 16:] = 1.0
        out = apply_baseline(x, np.ones((32, 32), dtype=np.uint8), BaselineSpec(kind="blur", blur_sigma=4.0))
        grad = np.abs(np.diff(out, axis=2)).max()
        assert grad < np.abs(np.diff(x, axis=2)).max()

    def test_shape_mismatch(self, rng):
        with pytest.raises(ValidationError):
            apply_baseline(_img(rng), np.ones((4, 4), dtype=np.uint8), BaselineSpec(kind="blur"))
