"""Keyed seed derivation.

Every consumer of randomness (stream masks, weight init, dropout, bootstrap
copies, replay sampling) gets its own child of the run seed, keyed by the
consumer's *name*, so adding a new consumer never shifts existing streams.
"""
import zlib

import numpy as np


def _key(name: str) -> int:
    return zlib.crc32(name.encode())


def seed_sequence(seed: int, consumer: str) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(seed), spawn_key=(_key(consumer),))


def generator(seed: int, consumer: str) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed_sequence(seed, consumer)))


def philox_key(seed: int, consumer: str) -> np.ndarray:
    return seed_sequence(seed, consumer).generate_state(2, dtype=np.uint64)


def counter_uniforms(key: np.ndarray, t: int, n: int) -> np.ndarray:
    """``n`` uniforms that depend only on (key, t): element j is keyed by (key, t, j)."""
    bitgen = np.random.Philox(key=key, counter=np.array([0, 0, 0, t], dtype=np.uint64))
    return np.random.Generator(bitgen).random(n)
