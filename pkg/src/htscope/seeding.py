"""Hierarchical seed derivation.

All randomness in an experiment flows from one master seed. Child generators
are derived from the master seed plus a path of string/int labels, e.g.
``rng_for(master, "trace", "div", trial)``. The derivation hashes the joined
path with CRC32 and feeds (master, hash) into ``numpy.random.SeedSequence``,
so sub-runs are independently reproducible across processes and platforms.
"""

from __future__ import annotations

import zlib

import numpy as np


def child_seed_sequence(master: int, *path: object) -> np.random.SeedSequence:
    key = "/".join(str(p) for p in path)
    return np.random.SeedSequence([int(master) & 0xFFFFFFFF, zlib.crc32(key.encode("utf-8"))])


def rng_for(master: int, *path: object) -> np.random.Generator:
    """Deterministic generator for one labeled sub-task of an experiment."""
    return np.random.default_rng(child_seed_sequence(master, *path))
