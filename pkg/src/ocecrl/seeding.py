"""Deterministic seed derivation shared by the solvers and the outer loop."""

from __future__ import annotations

import numpy as np


def as_seed_sequence(seed) -> np.random.SeedSequence:
    return seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)


def child_seed(seq: np.random.SeedSequence, *key: int) -> np.random.SeedSequence:
    """A child of ``seq`` addressed by ``key``; unlike ``spawn`` it does not mutate ``seq``."""
    return np.random.SeedSequence(seq.entropy, spawn_key=(*seq.spawn_key, *key))


def child_rng(seq: np.random.SeedSequence, *key: int) -> np.random.Generator:
    return np.random.default_rng(child_seed(seq, *key))
