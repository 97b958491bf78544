"""Seed derivation and random generators.

Every stage gets its own sub-seed derived from the master seed and an
ASCII role tag::

    sub_seed = little_endian_u64(blake2b(f"{master}:{tag}", digest_size=8))

Generators are always Philox (a counter-based 64-bit PRNG), never the
global numpy state.
"""
from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(master: int, tag: str) -> int:
    digest = hashlib.blake2b(f"{int(master)}:{tag}".encode("ascii"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed)))
