"""Hot loops of the analysis toolkit, each with a numba and a numpy variant.

Both variants evaluate the same floating-point expressions in the same
order, so the walk tables agree bit for bit. The Monte Carlo kernels draw
from different generators (numba's internal one versus numpy's PCG64), so
they agree only in distribution.
"""

from __future__ import annotations

import numpy as np

from .._accel import njit, resolve


# ---------------------------------------------------------------------------
# Absorbing three-branch walk
#
# Row update on a fixed window of states: cur[i] = down*prev[i-1] +
# stay*prev[i] + up*prev[i+1], states outside the window read as 0, and the
# absorbing column is pinned to 1. The window is chosen wide enough that no
# state reachable from the absorbing column is cut off.


@njit
def _walk_full_loop(t_max, width, absorb, down, stay, up):
    out = np.zeros((t_max + 1, width))
    out[0, absorb] = 1.0
    for t in range(1, t_max + 1):
        prev = out[t - 1]
        cur = out[t]
        for i in range(width):
            left = prev[i - 1] if i > 0 else 0.0
            right = prev[i + 1] if i < width - 1 else 0.0
            cur[i] = down * left + stay * prev[i] + up * right
        cur[absorb] = 1.0
    return out


def _walk_full_vec(t_max, width, absorb, down, stay, up):
    out = np.zeros((t_max + 1, width))
    out[0, absorb] = 1.0
    left = np.zeros(width)
    right = np.zeros(width)
    for t in range(1, t_max + 1):
        prev = out[t - 1]
        left[1:] = prev[:-1]
        right[:-1] = prev[1:]
        out[t] = down * left + stay * prev + up * right
        out[t, absorb] = 1.0
    return out


@njit
def _walk_column_loop(t_max, width, absorb, column, down, stay, up):
    prev = np.zeros(width)
    cur = np.zeros(width)
    col = np.zeros(t_max + 1)
    prev[absorb] = 1.0
    col[0] = prev[column]
    for t in range(1, t_max + 1):
        for i in range(width):
            left = prev[i - 1] if i > 0 else 0.0
            right = prev[i + 1] if i < width - 1 else 0.0
            cur[i] = down * left + stay * prev[i] + up * right
        cur[absorb] = 1.0
        col[t] = cur[column]
        prev, cur = cur, prev
    return col


def _walk_column_vec(t_max, width, absorb, column, down, stay, up):
    prev = np.zeros(width)
    prev[absorb] = 1.0
    left = np.zeros(width)
    right = np.zeros(width)
    col = np.zeros(t_max + 1)
    col[0] = prev[column]
    for t in range(1, t_max + 1):
        left[1:] = prev[:-1]
        right[:-1] = prev[1:]
        prev = down * left + stay * prev + up * right
        prev[absorb] = 1.0
        col[t] = prev[column]
    return col


def walk_full(t_max: int, width: int, absorb: int, down: float, stay: float, up: float, backend: str | None = None):
    fn = _walk_full_loop if resolve(backend) == "numba" else _walk_full_vec
    return fn(int(t_max), int(width), int(absorb), float(down), float(stay), float(up))


def walk_column(
    t_max: int, width: int, absorb: int, column: int, down: float, stay: float, up: float, backend: str | None = None
):
    fn = _walk_column_loop if resolve(backend) == "numba" else _walk_column_vec
    return fn(int(t_max), int(width), int(absorb), int(column), float(down), float(stay), float(up))


# ---------------------------------------------------------------------------
# Erlang race counts
#
# For each sample: tH ~ Gamma(a_h, s_h), tA ~ Gamma(a_a, s_a),
# tH2 ~ Gamma(a_h2, s_h2), TH ~ Gamma(1, S_h), TA ~ Gamma(A_a, S_a).
# Event one is tH <= tA, event two is tA + TA <= tH2 + TH + delta.
# A shape of 0 means the variable is identically 0; an infinite scale
# means it is identically +inf.


@njit
def _gamma_draw(shape, scale):
    if shape <= 0.0:
        return 0.0
    if scale == np.inf:
        return np.inf
    return np.random.gamma(shape, scale)


@njit
def _race_loop(n, seed, a_h, s_h, a_a, s_a, a_h2, s_h2, s_H, A_a, S_a, delta):
    np.random.seed(seed)
    n1 = 0
    n2 = 0
    n12 = 0
    for _ in range(n):
        th = _gamma_draw(a_h, s_h)
        ta = _gamma_draw(a_a, s_a)
        th2 = _gamma_draw(a_h2, s_h2)
        big_th = _gamma_draw(1.0, s_H)
        big_ta = _gamma_draw(A_a, S_a)
        e1 = th <= ta
        e2 = ta + big_ta <= th2 + big_th + delta
        if e1:
            n1 += 1
        if e2:
            n2 += 1
        if e1 and e2:
            n12 += 1
    return n1, n2, n12


def _draw(rng, shape, scale, n):
    if shape <= 0:
        return np.zeros(n)
    if np.isinf(scale):
        return np.full(n, np.inf)
    return rng.gamma(shape, scale, n)


def _race_vec(n, seed, a_h, s_h, a_a, s_a, a_h2, s_h2, s_H, A_a, S_a, delta, chunk=1 << 16):
    rng = np.random.default_rng(seed)
    n1 = n2 = n12 = 0
    done = 0
    while done < n:
        m = min(chunk, n - done)
        th = _draw(rng, a_h, s_h, m)
        ta = _draw(rng, a_a, s_a, m)
        th2 = _draw(rng, a_h2, s_h2, m)
        big_th = _draw(rng, 1.0, s_H, m)
        big_ta = _draw(rng, A_a, S_a, m)
        e1 = th <= ta
        with np.errstate(invalid="ignore"):
            e2 = ta + big_ta <= th2 + big_th + delta
        n1 += int(e1.sum())
        n2 += int(e2.sum())
        n12 += int((e1 & e2).sum())
        done += m
    return n1, n2, n12


def race_counts(n, seed, a_h, s_h, a_a, s_a, a_h2, s_h2, s_H, A_a, S_a, delta, backend: str | None = None):
    args = (
        int(n),
        int(seed) % (1 << 32),
        float(a_h),
        float(s_h),
        float(a_a),
        float(s_a),
        float(a_h2),
        float(s_h2),
        float(s_H),
        float(A_a),
        float(S_a),
        float(delta),
    )
    # numpy's vectorised gamma sampler beats numba's scalar one, so the
    # compiled loop only runs when asked for by name
    if backend is not None and resolve(backend) == "numba":
        return tuple(int(x) for x in _race_loop(*args))
    return _race_vec(*args)
