"""Reproducible random streams for trajectory ensembles.

One counter-based Philox stream per trajectory, keyed by
master_seed XOR trajectory_index: cheap to construct, independent of
thread scheduling, and bit-stable across runs. The generator name and
keys go into every run manifest.
"""

from __future__ import annotations

import numpy as np

RNG_NAME = "numpy.random.Philox4x64-10"


def stream_key(seed: int, trajectory_index: int) -> int:
    return (int(seed) & 0xFFFFFFFFFFFFFFFF) ^ (int(trajectory_index) & 0xFFFFFFFFFFFFFFFF)


def trajectory_stream(seed: int, trajectory_index: int) -> np.random.Generator:
    """Independent stream for one trajectory of an ensemble."""
    return np.random.Generator(np.random.Philox(key=stream_key(seed, trajectory_index)))
