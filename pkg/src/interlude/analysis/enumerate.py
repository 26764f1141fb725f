"""Brute-force hitting probabilities by listing every step sequence.

Independent of the dynamic-programming solver: no recursion, just the sum
over all distinct paths of at most ``t`` steps that stop on first touching
the absorbing level. Practical up to t of about 13.
"""

from __future__ import annotations

import numpy as np

from .walk import LIVENESS, SAFETY, WalkParams

_cache: dict[int, np.ndarray] = {}


def _digits(t: int) -> np.ndarray:
    """All base-3 sequences of length t, shape (3**t, t); 0=down, 1=stay, 2=up."""
    d = _cache.get(t)
    if d is None:
        idx = np.arange(3**t, dtype=np.int64)
        d = np.empty((3**t, t), dtype=np.int8)
        for j in range(t):
            d[:, j] = (idx // 3**j) % 3
        _cache[t] = d
    return d


def hitting_probability(params: WalkParams, regime: str, t: int, z: int) -> float:
    """Unclipped P(t, z) by path enumeration.

    Every path that absorbs at step s is counted once by keeping only the
    sequences whose remaining steps are all "down" after the hit.
    """
    kappa = params.kappa
    if regime == LIVENESS:
        if z <= -kappa:
            return 1.0
    elif regime == SAFETY:
        if z >= kappa:
            return 1.0
    else:
        raise ValueError(regime)
    if t == 0:
        return 0.0
    d = _digits(t)
    pos = z + np.cumsum(d.astype(np.int64) - 1, axis=1)
    hit = pos <= -kappa if regime == LIVENESS else pos >= kappa
    any_hit = hit.any(axis=1)
    first = np.where(any_hit, hit.argmax(axis=1), t)
    cols = np.arange(t)[None, :]
    after = cols > first[:, None]
    canonical = any_hit & ~((d != 0) & after).any(axis=1)
    w = np.array([params.down, params.stay, params.up])[d]
    w = np.where(after, 1.0, w)
    return float(w[canonical].prod(axis=1).sum())
