"""Deterministic, splittable random streams.

Built on numpy's Philox counter-based generator so that identical seeds give
identical streams on every platform, and per-graph child streams can be
derived without sharing state.
"""

from __future__ import annotations

import numpy as np


class Rng:
    """Seeded random stream with cheap derived child streams."""

    def __init__(self, seed: int, _spawn_key: tuple = ()):
        self.seed = int(seed)
        self._spawn_key = tuple(_spawn_key)
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=self._spawn_key)
        self._gen = np.random.Generator(np.random.Philox(ss))

    def child(self, *key: int) -> "Rng":
        """Independent stream addressed by an integer key path."""
        return Rng(self.seed, self._spawn_key + tuple(int(k) for k in key))

    # thin pass-throughs, all float64 / int64

    def uniform(self, low=0.0, high=1.0, size=None):
        return self._gen.uniform(low, high, size=size)

    def integers(self, low, high=None, size=None):
        return self._gen.integers(low, high, size=size)

    def random(self, size=None):
        return self._gen.random(size=size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def choice(self, seq):
        return seq[int(self._gen.integers(0, len(seq)))]
