"""Structural interfaces the pipeline plugs models into.

These are documentation-grade Protocols: any object with matching methods
works. All implementations must be deterministic functions of (weights,
inputs); weights are immutable after load so inference can run concurrently.
"""

from __future__ import annotations

from typing import Protocol, runtime_checkable

import numpy as np


@runtime_checkable
class Segmenter(Protocol):
    n_categories: int

    def predict(self, x: np.ndarray) -> np.ndarray:
        """Per-pixel category scores of shape (n_categories, H, W)."""
        ...


@runtime_checkable
class Denoiser(Protocol):
    def predict_noise(self, y: np.ndarray, step: int, e_s: np.ndarray, e_t: np.ndarray, e_img: np.ndarray) -> np.ndarray:
        """Noise estimate with the latent's shape; deterministic in inputs."""
        ...


@runtime_checkable
class Codec(Protocol):
    downsample_factor: int

    def encode(self, image: np.ndarray) -> np.ndarray: ...

    def decode(self, latent: np.ndarray) -> np.ndarray: ...

    def latent_size(self, height: int, width: int) -> int: ...


@runtime_checkable
class TextEncoder(Protocol):
    dim: int

    def encode(self, prompt: str) -> np.ndarray: ...


@runtime_checkable
class StepEncoder(Protocol):
    dim: int

    def encode(self, step: int) -> np.ndarray: ...


@runtime_checkable
class CityClassifier(Protocol):
    n_cities: int

    def predict(self, x: np.ndarray) -> np.ndarray:
        """Per-city scores of shape (n_cities,)."""
        ...

    def feature_maps(self, x: np.ndarray) -> np.ndarray:
        """Last conv-stage activations (C, H', W')."""
        ...


@runtime_checkable
class FeatureExtractor(Protocol):
    extractor_id: str

    def stage_maps(self, x: np.ndarray) -> list[np.ndarray]: ...

    def pooled(self, x: np.ndarray) -> np.ndarray: ...


@runtime_checkable
class PersonEmbedder(Protocol):
    def embed(self, crop: np.ndarray) -> np.ndarray: ...
