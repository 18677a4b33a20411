"""Deterministic random-stream derivation.

Every randomized routine takes an explicit ``numpy.random.Generator``.
Sub-streams are derived from a master seed plus integer keys, so results
are independent of scheduling and iteration order.
"""

from __future__ import annotations

import numpy as np


def make_rng(seed: int) -> np.random.Generator:
    """Root generator for a run."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


def derive_rng(seed: int, *keys: int) -> np.random.Generator:
    """Generator for a sub-task, stable under parallel scheduling.

    (seed, keys) fully determines the stream; two distinct key tuples
    give statistically independent streams.
    """
    ss = np.random.SeedSequence(entropy=seed, spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.PCG64(ss))


def derive_seed(seed: int, *keys: int) -> int:
    """Integer sub-seed, for components that take a seed rather than a stream."""
    return int(derive_rng(seed, *keys).integers(2**63))
