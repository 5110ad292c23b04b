"""Seed-splitting scheme.

All randomness in a run flows from a single 64-bit seed. Independent
streams are derived with ``numpy.random.SeedSequence`` keyed on the run
seed followed by a component index and any extra indices (epoch, episode,
agent). The component indices below are the documented splitting scheme;
reusing an index with the same extra keys always reproduces the stream.
"""

import numpy as np

STREAM_ENV = 0        # environment dynamics (shipping quality, wind, users)
STREAM_INIT = 1       # parameter initialization
STREAM_ACTION = 2     # policy action sampling during collection
STREAM_NOISE = 3      # observation noise
STREAM_GRAD = 4       # gradient-batch subsampling
STREAM_EXPLORE = 5    # baseline exploration (epsilon draws, tie-breaks)


def rng_stream(seed: int, *indices: int) -> np.random.Generator:
    """Generator for the stream identified by (seed, *indices)."""
    return np.random.default_rng(np.random.SeedSequence((int(seed),) + tuple(int(i) for i in indices)))


def derive_seed(seed: int, *indices: int) -> int:
    """Deterministic 63-bit child seed for a sub-component."""
    return int(rng_stream(seed, *indices).integers(0, 2 ** 63))
