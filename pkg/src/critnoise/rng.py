"""Seeded random streams, one per (trial, purpose).

Streams are derived with :class:`numpy.random.SeedSequence` spawn keys, so a
trial's randomness depends only on ``(master_seed, trial_id, purpose)`` and
never on the order in which trials are executed or on the worker count.
"""

from __future__ import annotations

import enum

import numpy as np


class Purpose(enum.IntEnum):
    GRAPH = 0
    CORE = 1
    SPRINKLE_1 = 2
    SPRINKLE_2 = 3
    NOISE = 4
    AUX = 5
    PILOT = 6
    INNER = 7


def stream(master_seed: int, trial_id: int, purpose: Purpose | int, *extra: int) -> np.random.Generator:
    """Independent generator for one trial and purpose.

    ``extra`` adds further spawn-key components (e.g. the inner replicate of a
    nested estimator).
    """
    key = (int(trial_id), int(purpose)) + tuple(int(e) for e in extra)
    ss = np.random.SeedSequence(entropy=int(master_seed) & ((1 << 64) - 1), spawn_key=key)
    return np.random.Generator(np.random.PCG64(ss))


def trial_streams(master_seed: int, trial_id: int) -> dict[Purpose, np.random.Generator]:
    return {p: stream(master_seed, trial_id, p) for p in Purpose}


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)
