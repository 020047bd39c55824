"""Seed derivation and RNG construction.

All randomness in the package flows through counter-based Philox generators
so that runs are reproducible bit-for-bit across platforms. Independent
streams are derived by hashing a base seed together with string labels,
never by consuming a shared generator.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def derive_seed(base: int, *parts: object) -> int:
    """Derive an independent 64-bit seed from a base seed and labels."""
    h = hashlib.sha256()
    h.update(str(int(base)).encode())
    for p in parts:
        h.update(b"/")
        h.update(str(p).encode())
    return int.from_bytes(h.digest()[:8], "little")


def batch_seed(base: int, image_index: int) -> int:
    """Per-image seed for batch runs: base XOR image index."""
    return (int(base) ^ int(image_index)) & _MASK64


def make_rng(seed: int) -> np.random.Generator:
    """Seeded Philox generator (64-bit counter-based)."""
    return np.random.Generator(np.random.Philox(key=int(seed) & _MASK64))
