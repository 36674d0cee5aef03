"""Deterministic seed derivation.

All randomness in a run flows from one 64-bit root seed.  Each component
derives its own independent stream by hashing a scope path (component name,
radius index, repetition index, ...) into SeedSequence entropy.  The scheme
is documented so runs are replayable: stream(root, *scope) feeds SHA-256 of
the UTF-8 scope path, split into 32-bit words, after the root seed.
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_entropy(root_seed: int, *scope) -> list[int]:
    path = "/".join(str(s) for s in scope)
    digest = hashlib.sha256(path.encode("utf-8")).digest()
    words = [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)]
    return [int(root_seed) & 0xFFFFFFFFFFFFFFFF, *words]


def derive_rng(root_seed: int, *scope) -> np.random.Generator:
    """Independent generator for a named component of a run."""
    return np.random.default_rng(np.random.SeedSequence(derive_entropy(root_seed, *scope)))


def derive_seed(root_seed: int, *scope) -> int:
    """64-bit sub-seed, for components that take plain integer seeds."""
    rng = derive_rng(root_seed, *scope)
    return int(rng.integers(0, 2**63 - 1))
