"""Seeded random streams for reproducible simulation.

Every scenario and every noise application draws from its own Philox
(counter-based) stream keyed by ``(seed, stream name)``, so results never
depend on the order or the thread in which scenarios are generated.
"""
import zlib

import numpy as np

SEED_MASK = (1 << 64) - 1


def _stream_id(name: str) -> int:
    return zlib.crc32(name.encode('utf-8'))


class SeededRNG:
    """Named Philox stream for one (seed, purpose) pair."""

    def __init__(self, seed: int, stream: str = 'default'):
        seed = int(seed) & SEED_MASK
        entropy = [seed & 0xFFFFFFFF, seed >> 32, _stream_id(stream)]
        self._generator = np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))

    @property
    def generator(self) -> np.random.Generator:
        return self._generator

    def uniform(self, a: float, b: float) -> float:
        if a == b:
            # still consume a draw so the stream layout does not depend on range widths
            self._generator.random()
            return float(a)
        return float(self._generator.uniform(a, b))

    def integers(self, low: int, high: int) -> int:
        """Uniform integer in the closed range [low, high]"""
        return int(self._generator.integers(low, high, endpoint=True))

    def choice_index(self, n: int) -> int:
        return int(self._generator.integers(0, n))


def scenario_seed(base_seed: int, index: int) -> int:
    """Seed of the ``index``-th scenario of a batch."""
    return (int(base_seed) + int(index)) & SEED_MASK
