"""Deterministic random streams.

All randomness in the package flows through PCG64 generators whose seeds
are derived as ``seed XOR hash(tag)``, so the sampler, weight init,
augmentation, etc. consume independent, platform-stable streams.
"""

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def derive_seed(seed: int, tag: str) -> int:
    """Mix a purpose tag into a base seed (stable across platforms)."""
    digest = hashlib.sha256(tag.encode("utf-8")).digest()
    tag_bits = int.from_bytes(digest[:8], "little")
    return (int(seed) ^ tag_bits) & _MASK64


def stream(seed: int, tag: str) -> np.random.Generator:
    """A PCG64 generator dedicated to one purpose."""
    return np.random.Generator(np.random.PCG64(derive_seed(seed, tag)))
