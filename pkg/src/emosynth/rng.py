"""Deterministic random-stream derivation.

Every stochastic operation in the engine draws from a named stream derived
from a 64-bit user seed plus an integer path, e.g. ``(seed, iteration, index)``
for per-element training draws. Streams with distinct paths are statistically
independent, and the same (seed, path) always reproduces the same draws.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


def make_rng(seed: int, *path: int) -> np.random.Generator:
    """Return a Generator for the stream identified by ``seed`` and ``path``."""
    entropy = [int(seed) & _MASK64] + [int(p) & _MASK64 for p in path]
    return np.random.default_rng(np.random.SeedSequence(entropy))
