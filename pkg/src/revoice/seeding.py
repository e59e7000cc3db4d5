"""Deterministic RNG derivation.

Every random draw in the pipeline comes from a generator derived here from
a master seed plus a tuple of string/int tags, so any stage can be re-run
in isolation and reproduce the same stream regardless of call order or
worker count.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _key_to_int(key: object) -> int:
    if isinstance(key, (int, np.integer)):
        return int(key) & 0xFFFFFFFF
    digest = hashlib.sha256(str(key).encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "little")


def seed_sequence(*keys: object) -> np.random.SeedSequence:
    """Build a SeedSequence from an arbitrary mix of ints and strings."""
    if not keys:
        raise ValueError("at least one seed key is required")
    return np.random.SeedSequence([_key_to_int(k) for k in keys])


def rng(*keys: object) -> np.random.Generator:
    """NumPy generator deterministically derived from the given keys."""
    return np.random.default_rng(seed_sequence(*keys))


def derive_seed(*keys: object) -> int:
    """A stable 63-bit integer seed derived from the given keys."""
    state = seed_sequence(*keys).generate_state(2, dtype=np.uint32)
    return int(state[0]) | (int(state[1] & 0x7FFFFFFF) << 32)


def torch_generator(*keys: object):
    """Torch CPU generator seeded from the same key space as `rng`."""
    import torch

    gen = torch.Generator(device="cpu")
    gen.manual_seed(derive_seed(*keys))
    return gen
