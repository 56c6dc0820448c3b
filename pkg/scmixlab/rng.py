"""Counter-based random streams.

A stream is identified by ``(seed, iteration, purpose, lane)``. The identifier is hashed through
:class:`numpy.random.SeedSequence` into the 128-bit key of a :class:`numpy.random.Philox`
generator, so the draws of one stream never depend on how many draws another stream made.

Draw order inside each operation is fixed and documented at the operation.
"""
from typing import Optional, Tuple, Union

import numpy as np

from ._types import PurposeTag

_MASK32 = 0xFFFFFFFF


class RngStream:
    """Deterministic random stream

    Identical ``(seed, iteration, purpose, lane, counter)`` yields identical draws. The
    stream is a value type: duplicate it with :meth:`copy` or derive a new one with
    :meth:`fork` instead of sharing one between workers.

    :param int seed: 64-bit master seed
    :param int iteration: Iteration (or sample index) the stream belongs to, defaults to 0
    :param PurposeTag purpose: Consumer of the draws, defaults to ``DATA_SAMPLING``
    :param int lane: Extra namespace for batch elements, splits and workers, defaults to 0
    :param int counter: Number of Philox blocks to skip before the first draw, defaults to 0
    """
    def __init__(self, seed: int, iteration: int = 0, purpose: PurposeTag = PurposeTag.DATA_SAMPLING,
                 lane: int = 0, counter: int = 0):
        if not 0 <= seed < 2**64:
            raise ValueError(f"Seed must be an unsigned 64-bit integer, got {seed}")
        if iteration < 0 or lane < 0 or counter < 0:
            raise ValueError("Stream iteration, lane and counter must be non-negative")
        self.seed = int(seed)
        self.iteration = int(iteration)
        self.purpose = PurposeTag(purpose)
        self.lane = int(lane)
        self.counter = int(counter)
        self._key = np.random.SeedSequence(
            [self.seed & _MASK32, self.seed >> 32, self.iteration, int(self.purpose), self.lane]
        ).generate_state(2, dtype=np.uint64)
        bit_generator = np.random.Philox(key=self._key)
        if self.counter:
            bit_generator.advance(self.counter)
        self._generator = np.random.Generator(bit_generator)

    @property
    def stream_id(self) -> Tuple[int, PurposeTag, int]:
        return (self.iteration, self.purpose, self.lane)

    @property
    def generator(self) -> np.random.Generator:
        """Underlying numpy generator, for array draws"""
        return self._generator

    def fork(self, purpose: PurposeTag, lane: Optional[int] = None, iteration: Optional[int] = None) -> "RngStream":
        """Fresh stream with the same seed and a different identifier

        :param PurposeTag purpose:
        :param Optional[int] lane: defaults to this stream's lane
        :param Optional[int] iteration: defaults to this stream's iteration
        :return RngStream:
        """
        return RngStream(
            self.seed,
            self.iteration if iteration is None else iteration,
            purpose,
            self.lane if lane is None else lane,
        )

    def copy(self) -> "RngStream":
        """Duplicate including the current position"""
        clone = RngStream(self.seed, self.iteration, self.purpose, self.lane, self.counter)
        clone._generator.bit_generator.state = self._generator.bit_generator.state
        return clone

    def uniform_int(self, lo: int, hi: int) -> int:
        """Uniform integer in the closed range ``[lo, hi]``

        :raises ValueError: ``lo > hi``
        """
        if lo > hi:
            raise ValueError(f"Empty integer range [{lo}, {hi}]")
        return int(self._generator.integers(lo, hi, endpoint=True))

    def uniform(self, lo: float, hi: float, size: Union[None, int, Tuple[int, ...]] = None):
        return self._generator.uniform(lo, hi, size)

    def random(self) -> float:
        return float(self._generator.random())

    def subset(self, n: int, k: int) -> Tuple[int, ...]:
        """``k`` distinct indices out of ``range(n)``, uniformly without replacement, sorted"""
        if not 0 <= k <= n:
            raise ValueError(f"Cannot select {k} of {n} items")
        if k == 0:
            return ()
        return tuple(sorted(int(i) for i in self._generator.choice(n, size=k, replace=False)))

    def __repr__(self) -> str:
        return (f"RngStream(seed={self.seed}, iteration={self.iteration}, "
                f"purpose={self.purpose.name}, lane={self.lane}, counter={self.counter})")


def rng_uniform_int(stream: RngStream, lo: int, hi: int) -> int:
    """Uniform integer in ``[lo, hi]`` drawn from ``stream``

    :raises ValueError: ``lo > hi``
    """
    return stream.uniform_int(lo, hi)
