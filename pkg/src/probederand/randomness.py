"""Named, reproducible random substreams derived from one run seed."""

from __future__ import annotations

import numpy as np

# Documented default for every seeded component (CLI, configs, generator).
DEFAULT_SEED = 101

# Stream identifiers keeping the major consumers of randomness independent:
# changing how one component draws must not perturb the others.
STREAM_SAMPLING = 1
STREAM_KMEANS = 2
STREAM_GENERATION = 3

_MASK64 = (1 << 64) - 1


def substream(seed: int, *key: int) -> np.random.Generator:
    """Generator for the substream identified by ``key`` under ``seed``."""
    entropy = [int(seed) & _MASK64] + [int(k) & _MASK64 for k in key]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def child_seed(seed: int, *key: int) -> int:
    """64-bit seed for a nested component, stable for (seed, key)."""
    entropy = [int(seed) & _MASK64] + [int(k) & _MASK64 for k in key]
    state = np.random.SeedSequence(entropy).generate_state(1, np.uint64)
    return int(state[0])
