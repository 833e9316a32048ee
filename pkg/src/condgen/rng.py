"""Seeded random number generation.

Every random draw in the package flows through a counter-based Philox
bit generator so that results are reproducible across platforms and
independent of global numpy state.
"""

from __future__ import annotations

import numpy as np


def make_rng(seed: int) -> np.random.Generator:
    """Return a Generator backed by Philox, seeded deterministically."""
    return np.random.Generator(np.random.Philox(seed))


def spawn_seeds(seed: int, n: int) -> list[int]:
    """Derive ``n`` statistically independent child seeds from ``seed``.

    Uses numpy's SeedSequence spawning, so child streams never collide
    with each other or with the parent.
    """
    ss = np.random.SeedSequence(seed)
    return [int(child.generate_state(1, dtype=np.uint64)[0]) for child in ss.spawn(n)]
