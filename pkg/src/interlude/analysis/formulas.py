"""Closed-form quantities: delay penalty, frontrunning bound, throughput,
finality, reward scheme and utility."""

from __future__ import annotations

import math
from dataclasses import dataclass

from ..crypto import ParameterError

BITCOIN_CONFIRMATION_S = 9000.0  # 150 minutes, a reference constant


def epsilon(beta: float, delta: float) -> float:
    """Delay penalty e**(beta*delta) - 1."""
    if beta < 0 or delta < 0:
        raise ParameterError("beta and delta must be non-negative")
    return math.expm1(beta * delta)


@dataclass(frozen=True)
class FairnessParams:
    M: float
    m_pct: float
    d: float
    beta: float
    delta: float

    def __post_init__(self):
        if not (0 < self.M <= 1 and 0 < self.m_pct < 1):
            raise ParameterError("percentiles must lie in (0, 1)")
        if self.d < 0 or self.d > self.delta:
            raise ParameterError("d must lie in [0, delta]")


def frontrunning_bound(fp: FairnessParams) -> float:
    """M*beta*d / (1 - beta*delta)."""
    bd = fp.beta * fp.delta
    if bd >= 1:
        raise ParameterError("bound needs beta*delta < 1")
    return fp.M * fp.beta * fp.d / (1 - bd)


def throughput_best_case(beta: float, delta: float, k: int) -> float:
    """Blocks per second, beta(k+1)/(2 - beta*delta)."""
    bd = beta * delta
    if bd >= 2:
        raise ParameterError("formula needs beta*delta < 2")
    return beta * (k + 1) / (2 - bd)


def round_duration(beta: float, delta: float) -> float:
    return 2 / beta - delta


def time_to_finality(kappa: int, beta: float, delta: float) -> float:
    """kappa * (2/beta - delta) seconds."""
    if 2 / beta <= delta:
        raise ParameterError("needs 2/beta > delta")
    return kappa * round_duration(beta, delta)


def regime_warnings(k: int, lam: float, beta: float, delta: float, alpha: float = 0.0) -> list[str]:
    """Assumption checks for a parameter set; each violation yields a message."""
    out = []
    if alpha >= 0.5:
        out.append(f"adversary ratio {alpha:.3g} is not below 1/2")
    if lam > 0 and not (1 / beta - delta > k / lam):
        out.append(f"1/beta - delta = {1 / beta - delta:.6g} s does not exceed k/lambda = {k / lam:.6g} s")
    if not (1 / beta > 20 * delta):
        out.append(f"1/beta = {1 / beta:.6g} s is not above 20*delta = {20 * delta:.6g} s")
    if k <= 100:
        out.append(f"k = {k} is not above 100")
    return out


@dataclass(frozen=True)
class RewardScheme:
    """Block rewards sized to the expected cost of one block at cost rate
    ``eta_cost`` (currency per second of full-network mining)."""

    eta_cost: float
    beta: float
    lam: float
    gamma: float
    rho: float = 0.0

    def __post_init__(self):
        if self.eta_cost <= 0 or self.beta <= 0 or self.lam <= 0:
            raise ParameterError("cost rate and block rates must be positive")
        if self.gamma < 0 or not 0 <= self.rho <= self.gamma:
            raise ParameterError("need 0 <= rho <= gamma")

    @property
    def reward_series(self) -> float:
        return self.eta_cost / self.beta

    @property
    def reward_parallel(self) -> float:
        return self.eta_cost / self.lam

    def reward(self, kind: str) -> float:
        return self.reward_parallel if kind == "parallel" else self.reward_series


def expected_utility(play: str, scheme: RewardScheme, accept_prob: float, fee: float, kind: str = "parallel") -> float:
    """Expected net gain from one block: the reward cancels the expected
    mining cost, leaving the fee weighted by the acceptance probability.
    Honest play is always accepted."""
    if not 0 <= accept_prob <= 1:
        raise ParameterError("accept_prob must lie in [0, 1]")
    if fee < 0 or fee > scheme.gamma:
        raise ParameterError(f"fee {fee} outside [0, gamma={scheme.gamma}]")
    if kind not in ("parallel", "series"):
        raise ParameterError(f"unknown block kind {kind!r}")
    if play == "honest":
        accept_prob = 1.0
    elif play != "dummy":
        raise ParameterError(f"unknown play {play!r}")
    return accept_prob * fee
