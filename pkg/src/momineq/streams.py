"""Reproducible random-number substreams.

All randomness in the package flows through `Stream` objects.  A stream is
identified by a tuple of integer keys; child streams append keys.  Two
streams with the same key tuple always produce the same draws, regardless
of process, thread count, or the order in which sibling streams are
consumed.  This is what makes parallel Monte Carlo runs bit-reproducible.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

__all__ = ["Stream", "key_from"]

_MASK64 = (1 << 64) - 1


def key_from(value) -> int:
    """Map an int or string to a stable 64-bit stream key."""
    if isinstance(value, (int, np.integer)):
        return int(value) & _MASK64
    if isinstance(value, str):
        digest = hashlib.sha256(value.encode("utf-8")).digest()
        return int.from_bytes(digest[:8], "little")
    raise TypeError(f"stream keys must be int or str, got {type(value).__name__}")


@dataclass(frozen=True)
class Stream:
    """A node in the substream tree, identified by its key path."""

    keys: tuple[int, ...]

    @classmethod
    def from_seed(cls, seed: int) -> "Stream":
        return cls((key_from(seed),))

    def child(self, *subkeys) -> "Stream":
        """Derive a substream; subkeys may be ints or strings."""
        return Stream(self.keys + tuple(key_from(k) for k in subkeys))

    def generator(self) -> np.random.Generator:
        """Fresh generator seeded by this stream's key path."""
        return np.random.Generator(np.random.PCG64(np.random.SeedSequence(self.keys)))
