"""Deterministic seed-stream derivation for replicated Monte Carlo runs.

Every randomized entry point takes a ``SeedLike`` (a plain integer or a
``numpy.random.SeedSequence``).  Sub-streams are derived by extending the
spawn key, so a replicate's stream depends only on the base seed and its
own index, never on execution order or worker count.
"""

from __future__ import annotations

from typing import Union

import numpy as np

SeedLike = Union[int, np.random.SeedSequence]


def as_seed_sequence(seed: SeedLike) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(int(seed))


def substream(seed: SeedLike, *key: int) -> np.random.SeedSequence:
    """Child seed sequence for stream ``key``, independent of siblings."""
    ss = as_seed_sequence(seed)
    return np.random.SeedSequence(entropy=ss.entropy, spawn_key=ss.spawn_key + tuple(key))


def generator(seed: SeedLike, *key: int) -> np.random.Generator:
    """PCG64 generator on the (optionally derived) stream."""
    ss = substream(seed, *key) if key else as_seed_sequence(seed)
    return np.random.default_rng(ss)


def seed_fingerprint(seed: SeedLike) -> str:
    """Stable textual identifier of a seed stream, for report echoes."""
    ss = as_seed_sequence(seed)
    if ss.spawn_key:
        return f"{ss.entropy}/{'.'.join(str(k) for k in ss.spawn_key)}"
    return str(ss.entropy)
