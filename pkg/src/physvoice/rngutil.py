"""Deterministic random-stream derivation.

Every run takes one user-facing seed. Independent consumers (corpus
generation, weight init, per-input Monte-Carlo streams, per-round client
updates) derive their own generator from that seed plus a named path, so
streams never depend on call order and parallel execution stays
reproducible.
"""

from __future__ import annotations

import zlib

import numpy as np

MAX_SEED = 2**64 - 1


def _as_word(part: int | str) -> int:
    if isinstance(part, str):
        # crc32 is stable across platforms and Python versions.
        return zlib.crc32(part.encode("utf-8"))
    return int(part) & MAX_SEED


def substream(seed: int, *path: int | str) -> np.random.Generator:
    """Generator for the substream identified by ``path`` under ``seed``."""
    words = [int(seed) & MAX_SEED] + [_as_word(p) for p in path]
    return np.random.default_rng(words)
