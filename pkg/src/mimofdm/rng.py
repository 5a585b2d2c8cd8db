"""Seeded, splittable random streams.

Every stochastic routine takes either an integer seed or a
``numpy.random.Generator``.  Substreams are derived with
``numpy.random.SeedSequence`` spawn keys so that a (master seed, point,
trial, purpose) tuple always maps to the same generator regardless of the
order in which work units are executed.
"""

from __future__ import annotations

import numpy as np

# stable purpose tags for substreams
CHANNEL = 0
BITS = 1
NOISE = 2
DETECTOR = 3
ERASURE = 4


def as_generator(seed) -> np.random.Generator:
    """Return a Generator from an int seed, a SeedSequence or a Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def substream(master_seed: int, *key: int) -> np.random.Generator:
    """Generator for the work unit identified by ``key`` under ``master_seed``."""
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=tuple(int(k) for k in key))
    return np.random.default_rng(ss)
