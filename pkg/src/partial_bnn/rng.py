"""Counter-based random number generation with (seed, stream) addressing.

Every stochastic component draws from a Philox generator keyed by the pair
(seed, stream), so runs are reproducible bit for bit regardless of execution
order: chain i always uses stream i, a second optimizer always uses its own
stream, and fanning chains out to worker processes cannot perturb the draws.
"""

from __future__ import annotations

import numpy as np


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Generator for the given (seed, stream) pair."""
    if seed < 0 or stream < 0:
        raise ValueError("seed and stream must be non-negative")
    key = np.array([seed, stream], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
