"""Stable 64-bit hashing used for every derived seed."""
from __future__ import annotations

import hashlib

import numpy as np


def hash64(*parts) -> int:
    """Hash the string forms of ``parts`` into an unsigned 64-bit integer.

    Stable across processes and Python versions (unlike ``hash()``).
    """
    h = hashlib.blake2b(digest_size=8)
    for p in parts:
        h.update(repr(p).encode("utf-8"))
        h.update(b"\x1f")
    return int.from_bytes(h.digest(), "little")


def rng_for(*parts) -> np.random.Generator:
    return np.random.default_rng(hash64(*parts))
