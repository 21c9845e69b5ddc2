"""Seeded random streams.

Every random draw in the package comes from a stream identified by a
``(seed, tag, *coords)`` triple.  Streams are built on numpy's PCG64 fed by a
``SeedSequence`` whose spawn key encodes the tag, so introducing a new tag
never shifts the numbers produced under an existing one.
"""

import zlib

import numpy as np

RNG_VERSION = "pcg64-seedseq-crc32/1"

_SEED_MASK = (1 << 64) - 1


def _tag_key(tag):
    return zlib.crc32(tag.encode("utf-8"))


def _spawn_key(tag, coords):
    key = [_tag_key(tag)]
    for c in coords:
        c = int(c)
        if c < 0:
            raise ValueError(f"stream coordinates must be non-negative, got {c}")
        key.append(c)
    return tuple(key)


def stream(seed, tag, *coords):
    """Return an independent ``np.random.Generator`` for ``(seed, tag, coords)``."""
    ss = np.random.SeedSequence(int(seed) & _SEED_MASK, spawn_key=_spawn_key(tag, coords))
    return np.random.Generator(np.random.PCG64(ss))


def derive_seed(seed, tag, *coords):
    """Derive a 64-bit child seed, e.g. one per grid cell or trial."""
    ss = np.random.SeedSequence(int(seed) & _SEED_MASK, spawn_key=_spawn_key(tag, coords))
    return int(ss.generate_state(1, dtype=np.uint64)[0])
