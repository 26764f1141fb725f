"""Monte Carlo estimate of the two Erlang races behind the fork-growth bound.

With ``f`` public forks and ``h`` honest blocks already on the adversary's
k-set, the adversary keeps ``f`` forks alive only if the honest parties
finish ``f*h`` parallel blocks no later than it finishes its remaining
``k - h`` (event one), and its series blocks then land before the honest
side completes another k-set per fork plus a series block (event two).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from . import kernels
from .formulas import regime_warnings

VARIANTS = {"trailing": -1, "level": 0}  # adversary series-block count is f + offset


@dataclass(frozen=True)
class RaceEstimate:
    h: int
    samples: int
    p_first: float
    p_second: float
    p_joint: float
    se_first: float
    se_second: float
    se_joint: float
    warnings: tuple[str, ...] = ()

    @property
    def product(self) -> float:
        return self.p_first * self.p_second

    @property
    def se_product(self) -> float:
        return math.hypot(self.p_second * self.se_first, self.p_first * self.se_second)


def _se(p: float, n: int) -> float:
    return math.sqrt(max(p * (1 - p), 0.0) / n)


def fork_race_montecarlo(
    f: int,
    k: int,
    h: int,
    alpha: float,
    lam: float,
    beta: float,
    delta: float,
    samples: int = 100_000,
    seed: int = 0,
    variant: str = "trailing",
    backend: str | None = None,
) -> RaceEstimate:
    """Sample t_H ~ Erlang(f h, lam), t_A ~ Erlang(k - h, alpha lam),
    t'_H ~ Erlang(f k, lam), T_H ~ Exp(beta), T_A ~ Erlang(f - 1 or f, alpha beta)."""
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    if not 0 <= h <= k or f < 1:
        raise ValueError("need f >= 1 and 0 <= h <= k")
    adv_series = f + VARIANTS[variant]
    inf = float("inf")
    adv_par_scale = 1 / (alpha * lam) if alpha > 0 else inf
    adv_ser_scale = 1 / (alpha * beta) if alpha > 0 else inf
    n1, n2, n12 = kernels.race_counts(
        samples,
        seed,
        f * h,
        1 / lam,
        k - h,
        adv_par_scale,
        f * k,
        1 / lam,
        1 / beta,
        adv_series,
        adv_ser_scale,
        delta,
        backend,
    )
    p1, p2, p12 = n1 / samples, n2 / samples, n12 / samples
    warn = tuple(regime_warnings(k, lam, beta, delta, alpha))
    return RaceEstimate(h, samples, p1, p2, p12, _se(p1, samples), _se(p2, samples), _se(p12, samples), warn)


def fork_race_sweep(
    f: int,
    k: int,
    alpha: float,
    lam: float,
    beta: float,
    delta: float,
    samples: int = 100_000,
    seed: int = 0,
    variant: str = "trailing",
    h_values=None,
    backend: str | None = None,
) -> list[RaceEstimate]:
    hs = range(1, k) if h_values is None else h_values
    return [
        fork_race_montecarlo(f, k, h, alpha, lam, beta, delta, samples, seed + 7919 * h, variant, backend) for h in hs
    ]
