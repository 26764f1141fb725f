"""Simulation parameters."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields, replace

from ..analysis.formulas import regime_warnings
from ..crypto import ParameterError
from ..node import ADVERSARY_STRATEGIES

LATENCY_PROFILES = ("uniform", "fixed", "fairness")


@dataclass(frozen=True)
class SimConfig:
    k: int = 16
    n: int = 10
    m: int = 0
    adversary_power: float = 0.0
    shares: tuple[float, ...] | None = None
    beta: float = 1 / 600
    delta: float = 40.0
    lam: float | None = None
    latency: str = "uniform"
    fast_fraction: float = 0.1
    d_fast: float = 0.0
    d_slow: float | None = None
    adversary_latency: float = 0.0
    adversary_strategy: str = "selfish"
    tx_rate: float = 0.0
    fee_max: int = 100
    accounts: int = 1000
    initial_balance: int = 10**12
    block_capacity: int = 1500
    block_bytes: int = 1_000_000
    bucket_seconds: float = 60.0
    kappa: int = 14
    kappas: tuple[int, ...] = ()
    seed: int = 0
    rounds: int = 50
    horizon: float = math.inf
    parallel_difficulty: int = 16
    series_difficulty: int = 256
    reward_parallel: int = 0
    reward_series: int = 0
    fee_cap: int | None = None
    relay: bool = False
    trace: bool = False
    check_invariants: bool = True
    extra: dict = field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self):
        if self.k < 1:
            raise ParameterError("k must be >= 1")
        if self.n < 1:
            raise ParameterError("need at least one honest party")
        if self.m < 0:
            raise ParameterError("m must be >= 0")
        if self.beta <= 0 or self.delta < 0:
            raise ParameterError("beta must be positive and delta non-negative")
        if self.latency not in LATENCY_PROFILES:
            raise ParameterError(f"latency must be one of {LATENCY_PROFILES}")
        if self.lam is not None and self.lam <= 0:
            raise ParameterError("lam must be positive")
        if self.lam is None and 1 / self.beta <= self.delta:
            raise ParameterError("default lam needs 1/beta > delta")
        if not 0 <= self.adversary_power < 1:
            raise ParameterError("adversary_power must lie in [0, 1)")
        if self.adversary_power > 0 and self.m == 0:
            raise ParameterError("adversary_power > 0 needs m >= 1")
        if self.shares is not None:
            if len(self.shares) != self.n + self.m:
                raise ParameterError(f"shares lists {len(self.shares)} parties, expected n + m = {self.n + self.m}")
            if any(s < 0 for s in self.shares) or abs(sum(self.shares) - 1.0) > 1e-9:
                raise ParameterError("hash-power shares must be non-negative and sum to 1")
        if self.adversary_strategy not in ADVERSARY_STRATEGIES:
            raise ParameterError(f"adversary_strategy must be one of {ADVERSARY_STRATEGIES}")
        d_slow = self.slow_latency
        if self.latency == "fairness" and not (0 <= self.d_fast <= d_slow <= self.delta):
            raise ParameterError("fairness profile needs 0 <= d_fast <= d_slow <= delta")
        if not 0 <= self.adversary_latency <= self.delta:
            raise ParameterError("adversary_latency must lie in [0, delta]")
        if self.kappa < 0 or any(x < 0 for x in self.kappas):
            raise ParameterError("kappa must be non-negative")
        if self.rounds < 1:
            raise ParameterError("rounds must be >= 1")
        if self.tx_rate < 0 or self.fee_max < 0:
            raise ParameterError("tx_rate and fee_max must be non-negative")
        if self.tx_rate > 0 and self.accounts < 2:
            raise ParameterError("a transaction workload needs at least two accounts")
        if self.parallel_difficulty < 1 or self.series_difficulty < 1:
            raise ParameterError("difficulties must be >= 1")
        if self.bucket_seconds <= 0:
            raise ParameterError("bucket_seconds must be positive")

    @property
    def slow_latency(self) -> float:
        return self.delta if self.d_slow is None else self.d_slow

    @property
    def parallel_rate(self) -> float:
        """Network-wide parallel block rate; defaults to k / (1/beta - delta)."""
        if self.lam is not None:
            return self.lam
        return self.k / (1 / self.beta - self.delta)

    @property
    def party_shares(self) -> tuple[float, ...]:
        if self.shares is not None:
            return tuple(self.shares)
        honest = (1.0 - self.adversary_power) / self.n
        adv = self.adversary_power / self.m if self.m else 0.0
        return (honest,) * self.n + (adv,) * self.m

    @property
    def alpha(self) -> float:
        sh = self.party_shares
        hon = sum(sh[: self.n])
        return sum(sh[self.n :]) / hon if hon > 0 else math.inf

    @property
    def all_kappas(self) -> tuple[int, ...]:
        return tuple(sorted(set(self.kappas) | {self.kappa}))

    @property
    def fast_parties(self) -> frozenset[int]:
        """Honest parties on the fast side of the fairness profile: the
        smallest prefix of parties holding at least ``fast_fraction`` of power."""
        if self.latency != "fairness":
            return frozenset()
        out = []
        acc = 0.0
        sh = self.party_shares
        for p in range(self.n):
            if acc >= self.fast_fraction - 1e-12:
                break
            out.append(p)
            acc += sh[p]
        return frozenset(out)

    def warnings(self) -> list[str]:
        return regime_warnings(self.k, self.parallel_rate, self.beta, self.delta, self.alpha)

    def with_(self, **kw) -> SimConfig:
        return replace(self, **kw)

    def as_dict(self) -> dict:
        d = asdict(self)
        d.pop("extra")
        return d


CONFIG_FIELDS = {f.name: f for f in fields(SimConfig) if f.name != "extra"}
