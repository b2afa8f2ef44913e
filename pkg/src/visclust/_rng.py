"""Seeded random streams.

Every consumer draws from its own PCG64 stream derived from the user seed
through ``numpy.random.SeedSequence`` with a fixed per-purpose spawn key, so
adding draws to one purpose never shifts the numbers seen by another.
"""

import numpy as np

# Stable purpose ids; never renumber.
_PURPOSES = {
    "projections-1": 0,
    "projections-2": 1,
    "projections-3": 2,
    "sigma": 3,
    "subsample": 4,
    "data": 5,
    "probes": 6,
    "kmeans": 7,
    "plot": 8,
    "auto": 9,
}

SEED_MAX = 2**64 - 1


def check_seed(seed):
    seed = int(seed)
    if not 0 <= seed <= SEED_MAX:
        raise ValueError(f"seed must be in [0, 2**64), got {seed}")
    return seed


def stream(seed, purpose, *sub):
    """Return the generator for ``purpose`` under ``seed``.

    ``sub`` extends the spawn key (e.g. recursion level) so nested runs get
    streams that are independent of their parent.
    """
    key = (_PURPOSES[purpose], *(int(s) for s in sub))
    ss = np.random.SeedSequence(check_seed(seed), spawn_key=key)
    return np.random.Generator(np.random.PCG64(ss))


def as_generator(rng):
    """Accept a Generator, an int seed or None (seed 0)."""
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.Generator(np.random.PCG64(check_seed(0 if rng is None else rng)))
