"""Indexed random number streams.

Every random draw in bagshrink comes from a generator addressed by
``(seed, *keys)``. Two calls with the same address always produce the same
stream, and streams with different addresses are statistically independent,
so work can be split over threads without changing any result.
"""

from typing import Optional

import numpy as np

# Top-level stream keys, kept disjoint so tuning never sees evaluation data
TUNE_STREAM = 0
EVAL_STREAM = 1
GENERATE_STREAM = 2
CHECK_STREAM = 3
CALIBRATION_STREAM = 4
SPLIT_STREAM = 5


def stream(seed: Optional[int], *keys: int) -> np.random.Generator:
    """Return the generator addressed by ``seed`` and ``keys``.

    Args:
        seed: Root entropy (None draws fresh OS entropy)
        keys: Stream path, e.g. ``(EVAL_STREAM, trial_index)``

    Returns:
        A numpy Generator
    """
    sequence = np.random.SeedSequence(entropy=seed, spawn_key=tuple(int(k) for k in keys))
    return np.random.default_rng(sequence)
