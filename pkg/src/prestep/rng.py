"""Deterministic splittable random streams.

An `Rng` value names a stream by (seed, path): a 64-bit seed plus a
sequence of 64-bit branch labels. Splitting appends a label; the stream
key is a hash of the whole path, so streams on different paths are
statistically independent and a given path always yields the same draws.
Draws go through a counter-based generator (numpy Philox) keyed by that
hash, so an `Rng` value is freely copyable and never mutates.

The functional contract mirrors the environments': code that needs fresh
randomness must split, never "advance" a shared generator.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass

import numpy as np

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True, slots=True)
class Rng:
    """Immutable handle for one random stream."""

    seed: int
    path: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "seed", self.seed & _MASK64)
        object.__setattr__(self, "path", tuple(label & _MASK64 for label in self.path))

    def split(self, label: int) -> "Rng":
        """Derive the child stream for `label`. Distinct labels give
        distinct, independent streams; the same label always gives the
        same stream."""
        return Rng(self.seed, self.path + (label & _MASK64,))

    def key_bytes(self) -> bytes:
        """32-byte stream key (SHA-256 of the little-endian packed path)."""
        packed = struct.pack("<%dQ" % (1 + len(self.path)), self.seed, *self.path)
        return hashlib.sha256(packed).digest()

    def generator(self) -> np.random.Generator:
        """Fresh numpy generator positioned at the start of this stream.

        Two calls return generators that produce identical sequences.
        """
        key = int.from_bytes(self.key_bytes()[:16], "little")
        return np.random.Generator(np.random.Philox(key=key))

    # Convenience one-shot draws. Each reads from the start of the
    # stream, so callers wanting several independent values must split.

    def randbits64(self) -> int:
        return int(self.generator().integers(0, 1 << 64, dtype=np.uint64))

    def uniform(self) -> float:
        return float(self.generator().random())

    def randint(self, n: int) -> int:
        """Uniform integer in [0, n)."""
        if n <= 0:
            raise ValueError("n must be positive")
        return int(self.generator().integers(0, n))
