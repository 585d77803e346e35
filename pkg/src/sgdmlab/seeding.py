"""Deterministic per-run seeding for parallel Monte-Carlo execution."""

from __future__ import annotations

import numpy as np

__all__ = ["seed_split", "rng_for"]


def seed_split(master_seed: int, run_index: int) -> np.random.SeedSequence:
    """Derive an independent per-run seed from (master_seed, run_index).

    Counter-based: the spawn key makes the mapping injective in run_index and
    platform-independent, so results do not depend on execution order or
    worker count.
    """
    if master_seed < 0 or run_index < 0:
        raise ValueError("master_seed and run_index must be non-negative")
    return np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(run_index),))


def rng_for(master_seed: int, run_index: int) -> np.random.Generator:
    """Generator for one Monte-Carlo run."""
    return np.random.default_rng(seed_split(master_seed, run_index))
