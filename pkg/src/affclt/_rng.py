"""Counter-based random streams.

All randomness in the package flows through Philox generators keyed by a
64-bit master seed plus a tuple of small integers naming the stream.  Streams
derived from the same master seed are independent and reproducible regardless
of evaluation order or thread count, which is what makes replication-level
parallelism and the coupled-randomness SIR construction possible.
"""

from __future__ import annotations

import numpy as np

# Stream namespaces.  Keeping them in one place avoids accidental collisions
# between subsystems that share a master seed.
NS_MODEL = 1
NS_SEEDSET = 2
NS_EDGE_UNIFORMS = 3
NS_PILOT = 4
NS_PROJECTIONS = 5
NS_SUBSAMPLE = 6
NS_ASSIGNMENT = 7


def stream(master_seed: int, *path: int) -> np.random.Generator:
    """Return a Generator for the stream named by ``path`` under ``master_seed``."""
    if master_seed < 0:
        raise ValueError("master seed must be nonnegative")
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=tuple(int(x) for x in path))
    return np.random.Generator(np.random.Philox(ss))


def replication_seeds(master_seed: int, count: int, *path: int) -> np.ndarray:
    """Derive ``count`` 63-bit per-replication seeds from one stream.

    The seeds themselves are data (stored in SampleArray metadata), so they are
    drawn once from a named stream rather than spawned lazily.
    """
    g = stream(master_seed, *path)
    return g.integers(0, 2**63 - 1, size=count, dtype=np.int64)
