"""Splittable, seeded random streams.

A stream is a value: ``(seed, path)``.  Every call that needs randomness builds a
fresh generator from the stream, so the same stream always yields the same
variates and sibling streams share no mutable state.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np

_SEED_MASK = (1 << 64) - 1


@dataclass(frozen=True)
class RandomStream:
    """Reproducible source of unit-interval variates.

    Parameters
    ----------
    seed : int
        64-bit root seed.
    path : tuple of int
        Substream derivation key.  Children are derived by hashing
        ``(seed, path)`` through :class:`numpy.random.SeedSequence`.
    """

    seed: int
    path: Tuple[int, ...] = ()

    def __post_init__(self):
        if not 0 <= int(self.seed) <= _SEED_MASK:
            raise ValueError(f"seed must fit in 64 bits, got {self.seed}")
        if any(int(p) < 0 for p in self.path):
            raise ValueError(f"path entries must be non-negative, got {self.path}")
        object.__setattr__(self, "seed", int(self.seed))
        object.__setattr__(self, "path", tuple(int(p) for p in self.path))

    def child(self, *keys: int) -> "RandomStream":
        return RandomStream(self.seed, self.path + tuple(keys))

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=self.path)
        return np.random.Generator(np.random.PCG64(ss))

    def uniforms(self, shape) -> np.ndarray:
        """Open-interval uniforms in (0, 1)."""
        u = self.generator().random(shape)
        # random() is on [0, 1); nudge the single excluded endpoint
        return np.where(u == 0.0, np.nextafter(0.0, 1.0), u)
