"""Counter-based splittable random streams.

Every stream is identified by ``(master seed, path)``, where the path is a
tuple of labels (ints or strings). The stream's state is a Philox counter
generator keyed by a hash of that identity, so:

  * results never depend on which sibling streams were consumed first, and
  * any parallel task can derive its own stream from the task index alone.

This is what makes experiment outputs independent of the worker schedule.
"""

from __future__ import annotations

import hashlib

import numpy as np

_WORD_BITS = 64

PathLabel = int | str


def _philox_key(seed: int, path: tuple[PathLabel, ...]) -> np.ndarray:
    ident = repr((int(seed), path)).encode("utf-8")
    digest = hashlib.blake2b(ident, digest_size=16).digest()
    return np.frombuffer(digest, dtype=np.uint64).copy()


class Stream:
    """One deterministic random stream addressed by (seed, path)."""

    __slots__ = ("seed", "path", "_gen")

    def __init__(self, seed: int, path: tuple[PathLabel, ...] = ()):
        if not 0 <= seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        self.seed = int(seed)
        self.path = tuple(path)
        self._gen: np.random.Generator | None = None

    def child(self, *labels: PathLabel) -> "Stream":
        """Derive an independent stream for a subtask."""
        return Stream(self.seed, self.path + labels)

    def _generator(self) -> np.random.Generator:
        if self._gen is None:
            self._gen = np.random.Generator(
                np.random.Philox(key=_philox_key(self.seed, self.path))
            )
        return self._gen

    def words(self, count: int) -> np.ndarray:
        """Next ``count`` raw 64-bit words."""
        return self._generator().integers(
            0, 2**_WORD_BITS, size=count, dtype=np.uint64, endpoint=False
        )

    def bits(self, nbits: int) -> int:
        """Uniform integer in [0, 2**nbits)."""
        if nbits <= 0:
            raise ValueError("nbits must be positive")
        nwords = -(-nbits // _WORD_BITS)
        raw = int.from_bytes(self.words(nwords).tobytes(), "little")
        return raw & ((1 << nbits) - 1)

    def below(self, bound: int) -> int:
        """Uniform integer in [0, bound), unbiased via rejection."""
        if bound <= 0:
            raise ValueError("bound must be positive")
        if bound == 1:
            return 0
        nbits = (bound - 1).bit_length()
        while True:
            value = self.bits(nbits)
            if value < bound:
                return value

    def symmetric(self, magnitude: int) -> int:
        """Uniform integer in [-magnitude, magnitude]."""
        return self.below(2 * magnitude + 1) - magnitude

    def unit_float(self) -> float:
        """Uniform double in [0, 1) with 53 random bits."""
        return self.bits(53) * 2.0**-53

    def __repr__(self) -> str:
        return f"Stream(seed={self.seed}, path={self.path!r})"
