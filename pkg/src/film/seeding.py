"""Seed derivation.

Every randomized unit (tree, bag, subset, experiment cell) gets its own seed
derived from a master seed and a tuple of identifying parts, so results never
depend on execution order.
"""

import hashlib

import numpy as np


def derive_seed(*parts) -> int:
    """Stable 63-bit seed from ``parts`` (ints/strings/floats, compared by repr)."""
    key = "\x1f".join(repr(p) for p in parts).encode("utf-8")
    return int.from_bytes(hashlib.sha256(key).digest()[:8], "little") >> 1


def make_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed)))
