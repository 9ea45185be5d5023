"""Deterministic seed derivation for parallel simulation streams.

All randomness in the package flows through counter-based Philox generators
keyed by an integer path (root seed, stream tag, episode, rollout, ...).
Identical paths always yield identical draws, independent of execution
order, so calibration batches can be generated sequentially, chunked, or
in parallel with bit-identical results.
"""

from __future__ import annotations

import numpy as np

# Stream tags keep the independent sources of randomness disjoint.
STREAM_CALIBRATION = 0
STREAM_EVALUATION = 1
STREAM_BETA_PROBE = 2
STREAM_PRESEED = 3
STREAM_SYNTHETIC = 4


def seed_path(root: int, *path: int) -> tuple[int, ...]:
    """Normalized entropy tuple for a generator keyed by (root, *path)."""
    return (int(root),) + tuple(int(p) for p in path)


def generator(root: int, *path: int) -> np.random.Generator:
    """Philox generator keyed by (root, *path)."""
    ss = np.random.SeedSequence(entropy=seed_path(root, *path))
    return np.random.Generator(np.random.Philox(ss))
