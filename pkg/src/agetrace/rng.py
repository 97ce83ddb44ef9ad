"""Named random streams.

Every stochastic step draws from ``stream(seed, name, *keys)``. Streams are
derived from the root seed and a stable hash of the name, so adding or
reordering work in one module never perturbs the draws of another.
"""

import zlib

import numpy as np


def _key(part) -> int:
    if isinstance(part, (int, np.integer)):
        if part < 0:
            raise ValueError("stream keys must be non-negative")
        return int(part)
    return zlib.crc32(str(part).encode("utf-8"))


def stream(seed: int, name: str, *keys) -> np.random.Generator:
    """Independent generator for ``(seed, name, *keys)``."""
    entropy = [_key(seed), _key(name)] + [_key(k) for k in keys]
    return np.random.default_rng(np.random.SeedSequence(entropy))
