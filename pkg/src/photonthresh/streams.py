"""Reproducible random-stream plumbing.

Every stochastic routine takes a ``numpy.random.Generator``.  Helpers here
derive independent substreams from a root seed and an integer key path, so
per-pixel / per-trial streams are identical no matter how work is scheduled
across threads.
"""

from __future__ import annotations

import numpy as np


def root_rng(seed) -> np.random.Generator:
    """Generator for a root seed (int, SeedSequence, or existing Generator)."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def substream(seed, *key: int) -> np.random.Generator:
    """Independent generator for (seed, key...).

    Keys are folded into the SeedSequence entropy, so ``substream(s, i, j)``
    is deterministic and independent of call order.
    """
    ints = tuple(int(k) for k in key)
    return np.random.default_rng(np.random.SeedSequence(entropy=(int(seed),) + ints))


def spawn(rng_or_seed, n: int) -> list[np.random.Generator]:
    """n independent child generators."""
    if isinstance(rng_or_seed, np.random.Generator):
        seq = rng_or_seed.bit_generator.seed_seq
    else:
        seq = np.random.SeedSequence(int(rng_or_seed))
    return [np.random.default_rng(s) for s in seq.spawn(n)]
