"""Deterministic, platform-independent random streams (counter-based Philox)."""

import numpy as np

_MASK64 = 0xFFFFFFFFFFFFFFFF


def philox_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Independent generator for (seed, stream); negative seeds wrap to uint64."""
    ss = np.random.SeedSequence([seed & _MASK64, stream & _MASK64])
    return np.random.Generator(np.random.Philox(ss))
