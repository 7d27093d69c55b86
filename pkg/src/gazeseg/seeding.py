"""Derivation of named per-stage seeds from one root seed.

Every source of randomness in the toolkit draws from a stage-specific
seed derived here, so stages can be re-run or tested in isolation
without replaying the whole experiment's RNG stream.
"""

import hashlib

import numpy as np


def derive_seed(root_seed: int, name: str) -> int:
    """Stable 63-bit seed for stage `name` under `root_seed`."""
    digest = hashlib.sha256(f"{root_seed}:{name}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") & 0x7FFF_FFFF_FFFF_FFFF


def rng_for(root_seed: int, name: str) -> np.random.Generator:
    return np.random.default_rng(derive_seed(root_seed, name))
