"""Deterministic random streams.

Every random draw in a run comes from a PCG64 generator keyed by
``(seed, round, stage)`` through :class:`numpy.random.SeedSequence`'s
spawn key. Two runs that share a seed therefore agree draw-for-draw, and
changing the number of draws in one stage (for example a larger ``n``)
never shifts the draws of another stage or another round.
"""

from __future__ import annotations

import enum
import hashlib

import numpy as np

UINT64_MASK = (1 << 64) - 1


class Stage(enum.IntEnum):
    GENERATE = 0
    ESTIMATE = 1
    TARGET = 2
    ASSIGN = 3
    REVIEW = 4


def stream(seed: int, round_index: int, stage: int) -> np.random.Generator:
    """Return the generator for one (seed, round, stage) triple."""
    if not 0 <= seed <= UINT64_MASK:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(int(round_index), int(stage)))
    return np.random.Generator(np.random.PCG64(ss))


def mix_seed(seed_base: int, *parts: int) -> int:
    """XOR ``seed_base`` with a 64-bit BLAKE2b digest of ``parts``."""
    text = ":".join(str(int(p)) for p in parts).encode()
    digest = int.from_bytes(hashlib.blake2b(text, digest_size=8).digest(), "little")
    return (int(seed_base) ^ digest) & UINT64_MASK
