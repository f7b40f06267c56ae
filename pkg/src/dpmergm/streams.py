"""Deterministic, splittable random streams.

Every stream is derived from one root seed and a key tuple
``(module, iteration, step, component, replicate, ...)`` via
:class:`numpy.random.SeedSequence`, so the random numbers a task sees do not
depend on which worker runs it or in what order tasks finish.
"""

import zlib

import numpy as np

# fixed module ids; never renumber
MODULES = {
    "simulate": 1,
    "ratio": 2,
    "dpm": 3,
    "pseudo": 4,
    "assess": 5,
    "synth": 6,
    "sweep": 7,
}


def _key(parts):
    out = []
    for p in parts:
        if isinstance(p, str):
            out.append(MODULES.get(p, zlib.crc32(p.encode())))
        else:
            out.append(int(p))
    return tuple(out)


def seed_sequence(root, *key):
    return np.random.SeedSequence(int(root) % 2**64, spawn_key=_key(key))


def make_rng(root, *key):
    """``numpy.random.Generator`` for the stream ``(root, *key)``."""
    return np.random.Generator(np.random.PCG64(seed_sequence(root, *key)))


def chain_seed(root, *key):
    """32-bit integer seed for a compiled chain on stream ``(root, *key)``."""
    return int(seed_sequence(root, *key).generate_state(1, dtype=np.uint32)[0])


def draw_seed(rng):
    """Pull a 32-bit chain seed out of an existing generator."""
    return int(rng.integers(0, 2**32, dtype=np.uint64))
