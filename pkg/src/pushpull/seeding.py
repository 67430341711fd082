"""Seed derivation.

Every random structure draws from its own substream, keyed by the root seed,
a string tag and optional integer indices. Two calls with the same key see the
same stream no matter what else ran before them.
"""

from __future__ import annotations

import zlib

import numpy as np

_MASK64 = (1 << 64) - 1


def _seed_sequence(seed: int, tag: str, index: tuple[int, ...]) -> np.random.SeedSequence:
    if seed < 0:
        raise ValueError(f"seed must be nonnegative, got {seed}")
    key = (zlib.crc32(tag.encode("utf-8")),) + tuple(int(i) for i in index)
    return np.random.SeedSequence(entropy=int(seed) & _MASK64, spawn_key=key)


def derive_rng(seed: int, tag: str, *index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(_seed_sequence(seed, tag, index)))


def derive_seed(seed: int, tag: str, *index: int) -> int:
    """64-bit child seed, for handing to functions that take a plain integer."""
    state = _seed_sequence(seed, tag, index).generate_state(1, np.uint64)
    return int(state[0])
