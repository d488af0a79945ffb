"""Seed derivation.

Every random stream is derived from a master seed plus a tuple of integer
keys, so each (trial, purpose) pair gets an independent generator and the
result of a computation never depends on scheduling order.
"""

import numpy as np

# purpose keys
DATA = 0
INIT = 1
POPULATION = 2
PROBES = 3
TRIAL = 4
MODEL = 5


def derive_seed(master_seed: int, *keys: int) -> int:
    """Deterministically derive a 64-bit seed from ``master_seed`` and ``keys``."""
    ss = np.random.SeedSequence(int(master_seed), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def make_rng(seed: int, *keys: int) -> np.random.Generator:
    """Generator for ``seed`` (optionally specialised by ``keys``)."""
    if keys:
        ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    else:
        ss = np.random.SeedSequence(int(seed))
    return np.random.Generator(np.random.PCG64(ss))
