"""Seeded random streams.

Every random draw in the package goes through :func:`make_rng`.  Streams are
PCG64 generators keyed by a ``SeedSequence`` built from the 64-bit seed plus
optional integer stream keys, so independent trials and sub-streams can be
derived without coordination.  ``Generator.integers`` draws bounded integers
by rejection (Lemire), so there is no modulo bias.
"""

from __future__ import annotations

import numpy as np

RNG_NAME = "numpy-pcg64-seedsequence/v1"

_MASK64 = (1 << 64) - 1


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Return the generator for ``seed`` and the optional sub-stream keys."""
    entropy = [int(seed) & _MASK64, *(int(s) & _MASK64 for s in stream)]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def derive_seed(master: int, *keys: int) -> int:
    """Hash ``(master, *keys)`` to a fresh 64-bit seed.

    Order independent: the seed for trial ``i`` does not depend on which
    other trials were run or in what order.
    """
    entropy = [int(master) & _MASK64, *(int(x) & _MASK64 for x in keys)]
    state = np.random.SeedSequence(entropy).generate_state(2, np.uint32)
    return int(state[0]) | (int(state[1]) << 32)
