"""Deterministic random-stream derivation.

Every run owns a 64-bit master seed. Episode i draws its own generator from
``derive_rng(master_seed, i)`` so episodes are mutually independent and each
one is reproducible in isolation, in any order, on any worker process.

The mixing function is fixed: SplitMix64 finalizers over
``splitmix64(master) XOR splitmix64(index + golden)``. Changing it would
silently invalidate every golden output file, so do not.
"""

import numpy as np

_MASK64 = 0xFFFFFFFFFFFFFFFF
_GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(x: int) -> int:
    """One round of the SplitMix64 finalizer (Steele et al.), on 64-bit ints."""
    x = (x + _GOLDEN) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def derive_seed(master_seed: int, index: int) -> int:
    """Counter-based 64-bit child seed for stream `index` of `master_seed`."""
    if index < 0:
        raise ValueError("stream index must be non-negative")
    a = splitmix64(master_seed & _MASK64)
    b = splitmix64((index + _GOLDEN) & _MASK64)
    return splitmix64(a ^ b)


def derive_rng(master_seed: int, index: int) -> np.random.Generator:
    """Independent generator for episode/stream `index` under `master_seed`."""
    return np.random.default_rng(derive_seed(master_seed, index))
