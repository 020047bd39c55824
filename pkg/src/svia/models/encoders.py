"""Training-free encoders: text, step, and the identity codec."""

from __future__ import annotations

import hashlib
import math

import numpy as np

from ..errors import ValidationError
from ..image import validate_image
from ..seeds import make_rng


class HashedTextEncoder:
    """Deterministic bag-of-tokens embedding.

    Each lowercase token seeds a Philox stream via SHA-256 and contributes a
    fixed Gaussian vector; the sum is scaled by 1/sqrt(token count). The same
    string always maps to the same embedding and the dimension is constant.
    """

    def __init__(self, dim: int = 16, seed: int = 0):
        if dim < 1:
            raise ValidationError("text encoder dim must be >= 1")
        self.dim = dim
        self.seed = seed

    def _token_vector(self, token: str) -> np.ndarray:
        digest = hashlib.sha256(f"{self.seed}:{token}".encode()).digest()
        return make_rng(int.from_bytes(digest[:8], "little")).standard_normal(self.dim)

    def encode(self, prompt: str) -> np.ndarray:
        tokens = prompt.lower().split()
        if not tokens:
            return np.zeros(self.dim, dtype=np.float64)
        out = np.zeros(self.dim, dtype=np.float64)
        for t in tokens:
            out += self._token_vector(t)
        return out / math.sqrt(len(tokens))


class SinusoidalStepEncoder:
    """Sinusoidal features of sampling progress i / total_steps.

    Encoding progress rather than the raw index keeps embeddings aligned
    across schedules with different step counts over the same continuous
    noise curve, so a denoiser trained at one d samples correctly at another.
    Distinct steps in 1..total_steps map to distinct embeddings.
    """

    def __init__(self, dim: int = 32, total_steps: int = 50):
        if dim < 2 or dim % 2:
            raise ValidationError("step encoder dim must be even and >= 2")
        if total_steps < 1:
            raise ValidationError("total_steps must be >= 1")
        self.dim = dim
        self.total_steps = total_steps
        half = dim // 2
        self._freqs = np.exp(-np.log(1000.0) * np.arange(half) / max(1, half - 1))

    def encode(self, step: int) -> np.ndarray:
        if not 1 <= step <= self.total_steps:
            raise ValidationError(f"step {step} outside [1, {self.total_steps}]")
        phase = 1000.0 * (step / self.total_steps) * self._freqs
        return np.concatenate([np.sin(phase), np.cos(phase)])


class IdentityCodec:
    """Pixel-space codec: flatten on encode, reshape and clamp on decode."""

    downsample_factor = 1

    def __init__(self, height: int, width: int):
        self.height = height
        self.width = width
        self.latent_channels = 3

    def latent_size(self, height: int, width: int) -> int:
        self._check_dims(height, width)
        return 3 * height * width

    def _check_dims(self, height: int, width: int) -> None:
        if (height, width) != (self.height, self.width):
            raise ValidationError(f"codec built for {self.height}x{self.width}, got {height}x{width}")

    def encode(self, image: np.ndarray) -> np.ndarray:
        image = validate_image(image)
        self._check_dims(*image.shape[1:])
        return image.ravel().astype(np.float64)

    def decode(self, latent: np.ndarray) -> np.ndarray:
        latent = np.asarray(latent, dtype=np.float64)
        expected = 3 * self.height * self.width
        if latent.shape != (expected,):
            raise ValidationError(f"latent size {latent.shape} != ({expected},)")
        return np.clip(latent.reshape(3, self.height, self.width), 0.0, 1.0)
