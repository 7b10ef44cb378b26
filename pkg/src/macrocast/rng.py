"""Deterministic random-stream derivation.

Every stochastic choice in the engine flows from one 64-bit run seed.
Independent streams are derived by hashing a path of labels (strings or
integers) into a spawn key, so concurrent work items get stable streams
regardless of scheduling or worker count.
"""

from __future__ import annotations

import hashlib

import numpy as np

__all__ = ["derive_rng", "stable_int"]


def stable_int(label: str | int) -> int:
    """Map a label to a stable 64-bit integer (platform/run independent)."""
    if isinstance(label, (int, np.integer)):
        return int(label) & 0xFFFFFFFFFFFFFFFF
    digest = hashlib.blake2b(str(label).encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big")


def derive_rng(seed: int, *path: str | int) -> np.random.Generator:
    """Return a Generator for the stream identified by ``seed`` and ``path``.

    Same (seed, path) always yields the same stream; distinct paths are
    independent for practical purposes.
    """
    key = tuple(stable_int(p) for p in path)
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=key))
