"""Deterministic training-free model stubs for unit tests."""

from __future__ import annotations

import math

import numpy as np

from svia.sampler import NoiseSchedule


class FixedLabelSegmenter:
    """Returns one-hot scores for a fixed label map, ignoring the image."""

    def __init__(self, labels: np.ndarray, category_names: list[str]):
        self.labels = np.asarray(labels)
        self.category_names = list(category_names)
        self.n_categories = len(category_names)

    def predict(self, x):
        scores = np.zeros((self.n_categories, *self.labels.shape))
        for i in range(self.n_categories):
            scores[i] = (self.labels == i).astype(np.float64)
        return scores


class ConstantScoreSegmenter:
    """All categories tie everywhere; argmax must pick index 0."""

    def __init__(self, n_categories: int, shape_hw: tuple[int, int]):
        self.n_categories = n_categories
        self.shape_hw = shape_hw
        self.category_names = [f"category_{i}" for i in range(n_categories)]

    def predict(self, x):
        return np.full((self.n_categories, *self.shape_hw), 0.5)


class EchoDenoiser:
    """Noise oracle whose target is reconstructed from the conditioning:
    context latent plus gray fill (0.5) inside the mask.

    Makes inpaint() return context + gray region and harmonize() return its
    coarse input exactly, so pipeline mechanics are testable without any
    trained weights.
    """

    def __init__(self, sched: NoiseSchedule, height: int, width: int, fill: float = 0.5):
        self.sched = sched
        self.h = height
        self.w = width
        self.fill = fill

    def _target(self, e_img: np.ndarray) -> np.ndarray:
        n = 3 * self.h * self.w
        ctx = e_img[:n].reshape(3, self.h, self.w)
        mask = e_img[n:].reshape(self.h, self.w)
        return (ctx + self.fill * mask[None, :, :]).ravel()

    def predict_noise(self, y, step, e_s, e_t, e_img):
        target = self._target(np.asarray(e_img, dtype=np.float64))
        abar = self.sched.abar(step)
        return (np.asarray(y, dtype=np.float64) - math.sqrt(abar) * target) / math.sqrt(max(1.0 - abar, 1e-300))


class FailingDenoiser:
    """Raises on first use; for stage-error propagation tests."""

    def predict_noise(self, y, step, e_s, e_t, e_img):
        raise RuntimeError("denoiser exploded")


class NanDenoiser:
    """Returns NaNs to trigger the sampler's numeric guard."""

    def predict_noise(self, y, step, e_s, e_t, e_img):
        return np.full_like(np.asarray(y, dtype=np.float64), np.nan)


class LookupClassifier:
    """City scores from a lookup of image fingerprints; an oracle classifier."""

    def __init__(self, images, labels, n_cities: int):
        self.n_cities = n_cities
        self._table = {self._key(x): int(c) for x, c in zip(images, labels)}

    @staticmethod
    def _key(x) -> bytes:
        return np.ascontiguousarray(x).tobytes()

    def predict(self, x):
        scores = np.zeros(self.n_cities)
        city = self._table.get(self._key(x))
        if city is not None:
            scores[city] = 1.0
        return scores
