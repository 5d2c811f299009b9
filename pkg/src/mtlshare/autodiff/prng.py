"""Seeded random streams.

Every stream is a PCG64 generator keyed by ``(seed, *path)`` through a
``SeedSequence`` spawn key, so the draws are the same on every platform and
independent of the order in which sibling streams are created.
"""

from __future__ import annotations

import zlib

import numpy as np


def _key(part) -> int:
    if isinstance(part, (int, np.integer)):
        return int(part)
    return zlib.crc32(str(part).encode("utf-8"))


class Prng:
    def __init__(self, seed: int, path: tuple = ()):
        if seed < 0 or seed >= 2**64:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
        self.seed = int(seed)
        self.path = tuple(path)
        ss = np.random.SeedSequence(self.seed, spawn_key=tuple(_key(p) for p in self.path))
        self._gen = np.random.Generator(np.random.PCG64(ss))

    def child(self, *path) -> Prng:
        """An independent stream derived from this one's seed and path."""
        return Prng(self.seed, self.path + path)

    def normal(self, shape, std: float = 1.0) -> np.ndarray:
        return self._gen.standard_normal(shape) * std

    def uniform(self, size=None):
        return self._gen.random(size)

    def integers(self, low: int, high: int, size=None):
        return self._gen.integers(low, high, size=size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def categorical(self, probs: np.ndarray) -> np.ndarray:
        """One index per row of ``probs`` by inverse-CDF sampling."""
        probs = np.atleast_2d(probs)
        u = self._gen.random(probs.shape[0])
        cdf = np.cumsum(probs, axis=1)
        idx = (u[:, None] >= cdf).sum(axis=1)
        return np.minimum(idx, probs.shape[1] - 1)

    def get_state(self) -> dict:
        return {"seed": self.seed, "path": list(self.path), "bit_generator": self._gen.bit_generator.state}

    def set_state(self, state: dict) -> None:
        self._gen.bit_generator.state = state["bit_generator"]

    @classmethod
    def from_state(cls, state: dict) -> Prng:
        prng = cls(state["seed"], tuple(state["path"]))
        prng.set_state(state)
        return prng


def he_normal(prng: Prng, shape, fan_in: int) -> np.ndarray:
    """Scaled-normal initialization with std sqrt(2 / fan_in)."""
    return prng.normal(shape, np.sqrt(2.0 / fan_in))
