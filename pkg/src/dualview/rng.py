"""Named random streams derived from one root seed.

Every source of randomness in the package (data shuffling, weight init,
dropout masks, negative sampling, synthesis) pulls its generator from
``stream(root_seed, *path)``.  Distinct paths give statistically independent
streams, and the same (seed, path) always reproduces the same stream, so
components can be varied or replayed independently.
"""

from __future__ import annotations

import zlib

import numpy as np


def stream(root_seed: int, *path: str | int) -> np.random.Generator:
    """Generator for the stream named by ``path`` under ``root_seed``."""
    words = [int(root_seed) & 0xFFFFFFFF]
    for part in path:
        words.append(zlib.crc32(str(part).encode("utf-8")))
    return np.random.default_rng(words)


def derive_seed(root_seed: int, *path: str | int) -> int:
    """A plain integer seed for the named stream (for APIs that take ints)."""
    return int(stream(root_seed, *path).integers(0, 2**63 - 1))
