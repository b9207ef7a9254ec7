"""Counter-based random streams with deterministic splitting.

All randomness in the package flows from a single 64-bit master seed.
Substreams are derived from (seed, *path) where the path is a tuple of
integers identifying the consumer (e.g. tree index, sub-sample index).
Because a substream depends only on its path, results are identical
whether consumers run serially or in parallel, in any order.
"""

from __future__ import annotations

import numpy as np

__all__ = ["stream", "substream_seed"]


def stream(seed: int, *path: int) -> np.random.Generator:
    """Return a Philox-backed Generator for the given (seed, path) key."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.Philox(ss))


def substream_seed(seed: int, *path: int) -> int:
    """Collapse (seed, path) to a single 32-bit seed for external RNGs.

    Used to hand deterministic per-tree seeds to the numba tree grower,
    whose internal RNG takes a plain integer seed.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(p) for p in path))
    return int(ss.generate_state(1, np.uint32)[0])
