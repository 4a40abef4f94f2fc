"""Named deterministic random streams.

Every random decision in a simulation draws from its own generator, keyed by
(master seed, purpose, extra key parts such as client id and round index).
Streams are independent of scheduling: drawing noise for client 7 in round 3
yields the same values no matter which clients ran before it, and disabling
one consumer (e.g. DP noise) leaves every other stream untouched.
"""
from __future__ import annotations

import numpy as np

# Purpose tags. Values are part of the reproducibility contract: changing them
# changes every derived stream.
CLIENT_SAMPLING = 0
BATCH = 1
NOISE = 2
RAND_K = 3
DATA_GEN = 4
PARTITION = 5


def stream(seed: int, purpose: int, *key: int) -> np.random.Generator:
    """Return the generator for (seed, purpose, *key).

    Built on numpy's SeedSequence spawn-key mechanism, so distinct keys give
    statistically independent streams and the mapping is stable across runs.
    """
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(purpose, *key))
    return np.random.default_rng(ss)
