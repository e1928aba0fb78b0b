"""Keyed, splittable random streams.

Streams are Philox (counter-based) generators whose key is derived from a
``SeedSequence`` with an explicit spawn key. A stream is therefore a pure
function of ``(seed, *keys)``: the same path index always sees the same
random numbers, no matter how work is split across threads.
"""
import hashlib

import numpy as np

# Paths are simulated in blocks of this many; each block owns one stream.
# Changing it changes every simulated draw, so it is part of the output format.
BLOCK_SIZE = 1024


def key_of(name):
    """Stable 63-bit integer key for an arbitrary string (e.g. a heart id)."""
    digest = hashlib.blake2b(str(name).encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little") >> 1


def stream(seed, *keys):
    """Return an independent generator for ``(seed, *keys)``."""
    if seed < 0:
        raise ValueError("seed must be non-negative")
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.Philox(ss))


def blocks(n, block_size=BLOCK_SIZE):
    """Yield ``(block_index, start, stop)`` covering ``range(n)``."""
    for b, start in enumerate(range(0, n, block_size)):
        yield b, start, min(start + block_size, n)
