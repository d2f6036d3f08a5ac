"""Derived seeds.

A single user seed fans out to independent streams, one per named stage, so
adding randomness to one stage never shifts the draws of another.
"""
import zlib

import numpy as np


def derive_seed(seed: int, *keys: str | int) -> np.random.SeedSequence:
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF]
    for key in keys:
        if isinstance(key, str):
            entropy.append(zlib.crc32(key.encode("utf-8")))
        else:
            entropy.append(int(key) & 0xFFFFFFFFFFFFFFFF)
    return np.random.SeedSequence(entropy)


def rng_for(seed: int, *keys: str | int) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, *keys))
