# dynamic_dps/seeding.py

from typing import Union

import numpy as np

SeedKey = Union[int, np.integer]


def derive_seed(*keys: SeedKey) -> int:
    """
    Deterministic 32-bit seed from a tuple of non-negative integer keys.

    Distinct key tuples give independent streams, so per-step and per-sample
    noise never depends on iteration order.
    """
    if not keys:
        raise ValueError("derive_seed needs at least one key")
    entropy = [int(k) for k in keys]
    if any(k < 0 for k in entropy):
        raise ValueError(f"seed keys must be non-negative, got {entropy}")
    return int(np.random.SeedSequence(entropy).generate_state(1)[0])


def rng_for(*keys: SeedKey) -> np.random.Generator:
    return np.random.default_rng(derive_seed(*keys))
