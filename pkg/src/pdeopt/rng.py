"""Deterministic RNG sub-streams derived from a single experiment seed.

Every source of randomness in the package draws from a named sub-stream so
that adding a new component to an experiment never perturbs the draws of an
existing one.  A sub-stream is identified by ``(seed, label)`` and the label
is folded in through SHA-256, so the mapping is stable across processes and
Python versions (the built-in ``hash`` is salted and unsuitable).
"""

from __future__ import annotations

import hashlib

import numpy as np


def _label_words(label: str) -> list[int]:
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    return [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)]


def substream(seed: int, label: str) -> np.random.Generator:
    """Return an independent generator for ``label`` under the root ``seed``."""
    return np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFF] + _label_words(label)))


def worker_streams(seed: int, label: str, n: int) -> list[np.random.Generator]:
    """Independent per-worker generators, e.g. for coupled SGD replicas."""
    return [substream(seed, f"{label}/{i}") for i in range(n)]
