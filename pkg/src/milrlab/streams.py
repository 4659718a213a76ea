"""Deterministic random streams.

Every randomized routine takes an explicit ``numpy.random.Generator``.  Trial
streams are derived from a master seed by the same SipHash PRF that backs the
cipher, so trial ``i`` always sees the same stream whatever the worker count.
"""

from __future__ import annotations

import numpy as np

from .prf_cipher import MASK64, siphash24


def derive_seed(master_seed: int, *path: int) -> int:
    """64-bit seed for the stream at ``path`` under ``master_seed``.

    Each path component re-keys the PRF with the previous output.
    """
    k0, k1 = master_seed & MASK64, (master_seed >> 64) & MASK64
    for component in path:
        k0 = siphash24(k0, k1, (component & MASK64).to_bytes(8, "little"))
        k1 = 0
    return k0


def trial_rng(master_seed: int, *path: int) -> np.random.Generator:
    return np.random.default_rng(derive_seed(master_seed, *path))


def as_rng(rng) -> np.random.Generator:
    """Accept a Generator, an int seed or None."""
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def spawn(rng: np.random.Generator, count: int) -> list[np.random.Generator]:
    """Independent child streams whose draws do not disturb each other."""
    seeds = rng.integers(0, 1 << 63, size=count, dtype=np.int64)
    return [np.random.default_rng(int(s)) for s in seeds]
