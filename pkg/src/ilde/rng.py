"""Deterministic random streams derived from a single root seed."""

import zlib

import numpy as np


def derive_rng(seed: int, tag: str, index: int = 0) -> np.random.Generator:
    """Return an independent generator keyed by ``(seed, tag, index)``.

    Streams with different tags or indices are statistically independent and
    reproducible, so workers can draw from their own stream in any order.
    """
    key = [int(seed) & 0xFFFFFFFF, zlib.crc32(tag.encode("utf-8")), int(index)]
    return np.random.default_rng(np.random.SeedSequence(key))
