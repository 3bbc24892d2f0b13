"""
Seeded random streams.

One master seed feeds every pipeline. Each stream is keyed by hashing the
seed together with a label and integer counters, and drives a counter-based
Philox generator, so any stream can be recreated without replaying others.
"""
import hashlib

import numpy as np


def derive_key(seed, label, *counters):
    """Return a 128-bit Philox key as two uint64 words."""
    h = hashlib.blake2b(digest_size=16)
    h.update(int(seed).to_bytes(8, 'little', signed=False))
    h.update(str(label).encode('utf-8'))
    for c in counters:
        h.update(b'|')
        h.update(int(c).to_bytes(8, 'little', signed=False))
    digest = h.digest()
    return np.frombuffer(digest, dtype='<u8').astype(np.uint64)


def derive_seed(seed, label, *counters):
    """Integer seed derived the same way (for APIs that want an int)."""
    words = derive_key(seed, label, *counters)
    return int(words[0]) ^ (int(words[1]) << 1)


def stream(seed, label, *counters):
    """
    Independent generator for (seed, label, counters).

    Args:
        seed: Master seed (non-negative integer)
        label: Pipeline label, e.g. "fixpoint"
        counters: Integers identifying the sub-stream (generation, chunk, ...)

    Returns:
        numpy.random.Generator backed by Philox
    """
    return np.random.Generator(np.random.Philox(key=derive_key(seed, label, *counters)))
