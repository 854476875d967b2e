"""Deterministic, splittable random streams.

Every stochastic choice in the package (node sampling, field synthesis,
parameter init, epoch shuffling) draws from a SeededRng. Streams are keyed
by (seed, path) where path is a tuple of small integers, so independent
components get independent, collision-free streams that are bit-identical
across runs and platforms (Philox is counter-based; numpy's SeedSequence
expansion is stable by contract).
"""

from __future__ import annotations

import numpy as np

ALGORITHM = "philox4x64/seedseq"


class SeededRng:
    def __init__(self, seed: int, path: tuple[int, ...] = ()):
        self.algorithm = ALGORITHM
        self.seed = int(seed)
        self.path = tuple(int(p) for p in path)
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=self.path)
        self._gen = np.random.Generator(np.random.Philox(ss))

    def split(self, *ids: int) -> "SeededRng":
        """Child stream at path + ids; independent of the parent's state."""
        return SeededRng(self.seed, self.path + ids)

    def standard_normal(self, shape) -> np.ndarray:
        return self._gen.standard_normal(shape)

    def choice_without_replacement(self, n: int, size: int) -> np.ndarray:
        return self._gen.choice(n, size=size, replace=False)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def __repr__(self) -> str:
        return f"SeededRng(seed={self.seed}, path={self.path})"
