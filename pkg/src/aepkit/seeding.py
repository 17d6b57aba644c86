"""Deterministic derivation of independent child seeds from a base seed.

Replicate-level parallelism needs one independent stream per replicate.  We
scramble (base_seed, replicate_index) through SplitMix64 and feed the result
to numpy's default_rng, so workers never share state and row order never
depends on scheduling.
"""
from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


def splitmix64(state: int) -> int:
    """One step of the SplitMix64 scrambler (public-domain constants)."""
    z = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def child_seed(base_seed: int, index: int) -> int:
    """A 64-bit seed for stream `index` derived from `base_seed`.

    Two scrambling rounds so that nearby (seed, index) pairs land far apart.
    """
    s = splitmix64((base_seed & _MASK64) ^ splitmix64(index & _MASK64))
    return splitmix64(s)


def rng_for(base_seed: int, index: int = 0) -> np.random.Generator:
    """Generator for replicate `index` of a run keyed by `base_seed`."""
    return np.random.default_rng(child_seed(base_seed, index))
