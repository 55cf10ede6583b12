"""Deterministic seed derivation.

All randomness in the package flows from 64-bit seeds through numpy
Generators.  Child seeds are elements of the splitmix64 output stream of a
base seed: element ``k`` is ``finalize(base + (k + 1) * GAMMA)`` with the
standard splitmix64 finalizer.  The rule is pure arithmetic, so the same
(base, k) pair yields the same child seed on every platform, and distinct
indices never collide (the finalizer is a bijection on 64-bit integers).
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15


def _finalize(z: int) -> int:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 & _MASK
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB & _MASK
    return z ^ (z >> 31)


def splitmix64(state: int) -> int:
    """Next splitmix64 output for ``state`` (equals ``derive_seed(state, 0)``)."""
    return _finalize((state + _GAMMA) & _MASK)


def derive_seed(base_seed: int, index: int) -> int:
    """Element ``index`` of the splitmix64 stream rooted at ``base_seed``."""
    if index < 0:
        raise ValueError("index must be nonnegative")
    return _finalize((base_seed + (index + 1) * _GAMMA) & _MASK)


def make_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(seed & _MASK)
