"""Deterministic per-purpose random streams derived from one master seed.

Every consumer of randomness (each agent in each phase, each mode's metric
sampling, ...) owns its own generator, keyed by a purpose constant plus its
own id. Streams are independent of scheduling, so parallel runs reproduce
serial runs bit for bit.
"""

from __future__ import annotations

import numpy as np

# Purpose keys. Never renumber: stream identity is part of run reproducibility.
PHASE1_INIT = 0
PHASE1_STEP = 1
PHASE2_EXPAND = 2
METRICS_SAMPLE = 3
ADVERSARY_SAMPLE = 4
BATCH_MIX = 5
CURRICULUM_LOOP = 6


def stream(master_seed: int, *key: int) -> np.random.Generator:
    """Independent generator for ``(master_seed, *key)``.

    Derivation goes through ``SeedSequence`` spawn keys, so a worker can
    recreate its stream from the master seed alone, without coordinating
    with any other worker.
    """
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=tuple(key)))


def derive_seed(master_seed: int, *key: int) -> int:
    """A child master seed (e.g. one per curriculum loop)."""
    seq = np.random.SeedSequence(master_seed, spawn_key=tuple(key))
    return int(seq.generate_state(1, dtype=np.uint64)[0])
