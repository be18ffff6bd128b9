"""Derivation of independent RNG streams from a single root seed.

Every stochastic call in the package takes a ``seed`` argument accepted by
:func:`numpy.random.default_rng`. The experiment runner derives those seeds
from ``(root_seed, qubit, cycle, session, purpose)`` so that results never
depend on evaluation order.
"""

from __future__ import annotations

import zlib

import numpy as np

PURPOSES = ("init", "cycle", "diffusion", "arch", "t1", "t1_freqs", "readout",
            "spectrogram", "calibration", "fresh", "layout")


def purpose_code(purpose: str) -> int:
    return zlib.crc32(purpose.encode("ascii"))


def derive_seed(root_seed: int, *keys: int | str) -> np.random.SeedSequence:
    """SeedSequence for ``keys`` under ``root_seed``; strings are hashed."""
    spawn_key = tuple(purpose_code(k) if isinstance(k, str) else int(k) for k in keys)
    return np.random.SeedSequence(entropy=int(root_seed), spawn_key=spawn_key)


def rng_from(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)
