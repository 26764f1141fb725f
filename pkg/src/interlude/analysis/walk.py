"""Absorbing random walk behind the liveness and safety bounds.

The walk tracks the gap between the honest chain and its best rival, one
step per round: it moves toward the honest side with probability
``1/2 - eps``, toward the adversary with ``1/4 + eps`` and otherwise stays
put. ``P(t, z)`` is the probability that a walk started at ``z`` touches the
absorbing level within ``t`` rounds.

* liveness: absorbing level ``-kappa``; the table is nondecreasing in ``t``
  and the liveness failure probability is ``1 - P(t, 0)``.
* safety: absorbing level ``+kappa``; ``P(t, 0)`` converges to the
  gambler's-ruin value ``ratio**-kappa``.

``coefficients="literal"`` keeps a stay weight of 1/2, so the three weights
sum to 5/4 and the values are upper bounds that grow without limit;
``raw`` holds the unclipped numbers and ``values`` the clipped ones.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..crypto import ParameterError
from . import kernels

LIVENESS = "liveness"
SAFETY = "safety"
FULL_TABLE_LIMIT = 4000


@dataclass(frozen=True)
class WalkParams:
    epsilon: float
    kappa: int
    t_max: int
    coefficients: str = "stochastic"

    def __post_init__(self):
        if self.kappa < 1:
            raise ParameterError("kappa must be a positive integer")
        if self.t_max < 0:
            raise ParameterError("t_max must be non-negative")
        if not 0 <= self.epsilon <= 0.5:
            raise ParameterError("epsilon must lie in [0, 1/2]")
        if self.coefficients not in ("stochastic", "literal"):
            raise ParameterError("coefficients must be 'stochastic' or 'literal'")

    @property
    def down(self) -> float:
        return 0.5 - self.epsilon

    @property
    def up(self) -> float:
        return 0.25 + self.epsilon

    @property
    def stay(self) -> float:
        if self.coefficients == "literal":
            return 0.5
        return 1.0 - self.down - self.up


@dataclass(frozen=True)
class WalkTable:
    params: WalkParams
    regime: str
    z_min: int
    raw: np.ndarray

    @property
    def values(self) -> np.ndarray:
        return np.clip(self.raw, 0.0, 1.0)

    @property
    def z_max(self) -> int:
        return self.z_min + self.raw.shape[1] - 1

    def p(self, t: int, z: int, raw: bool = False) -> float:
        """P(t, z); states outside the stored window read as 0 (or 1 past the
        absorbing level)."""
        kappa = self.params.kappa
        if self.regime == LIVENESS and z <= -kappa:
            return 1.0
        if self.regime == SAFETY and z >= kappa:
            return 1.0
        if not self.z_min <= z <= self.z_max:
            return 0.0
        v = float(self.raw[t, z - self.z_min])
        return v if raw else min(max(v, 0.0), 1.0)

    def column(self, z: int = 0, raw: bool = False) -> np.ndarray:
        if not self.z_min <= z <= self.z_max:
            return np.zeros(self.raw.shape[0])
        col = self.raw[:, z - self.z_min]
        return col.copy() if raw else np.clip(col, 0.0, 1.0)


def _window(params: WalkParams, regime: str) -> tuple[int, int, int]:
    """(z_min, width, absorbing index) of the window covering every state
    from which the absorbing level is reachable within t_max rounds."""
    kappa, t_max = params.kappa, params.t_max
    width = t_max + 2
    if regime == LIVENESS:
        return -kappa, width, 0
    if regime == SAFETY:
        return kappa - 1 - t_max, width, width - 1
    raise ParameterError(f"unknown regime {regime!r}")


def walk_table(params: WalkParams, regime: str, backend: str | None = None) -> WalkTable:
    if params.t_max > FULL_TABLE_LIMIT:
        raise ParameterError(f"full tables are limited to t_max <= {FULL_TABLE_LIMIT}; use a column solver")
    z_min, width, absorb = _window(params, regime)
    raw = kernels.walk_full(params.t_max, width, absorb, params.down, params.stay, params.up, backend)
    return WalkTable(params, regime, z_min, raw)


def walk_column(params: WalkParams, regime: str, z: int = 0, backend: str | None = None) -> np.ndarray:
    """Unclipped P(t, z) for t = 0..t_max without storing the table."""
    z_min, width, absorb = _window(params, regime)
    if regime == LIVENESS and z <= -params.kappa or regime == SAFETY and z >= params.kappa:
        return np.ones(params.t_max + 1)
    if not z_min <= z < z_min + width:
        return np.zeros(params.t_max + 1)
    return kernels.walk_column(params.t_max, width, absorb, z - z_min, params.down, params.stay, params.up, backend)


def liveness_walk(params: WalkParams, backend: str | None = None) -> WalkTable:
    return walk_table(params, LIVENESS, backend)


@dataclass(frozen=True)
class SafetyResult:
    column: np.ndarray  # unclipped P(t, 0), t = 0..t_max
    limit: float
    tail_change: float
    table: WalkTable | None = None


def safety_walk(params: WalkParams, full: bool = False, backend: str | None = None) -> SafetyResult:
    """P(t, 0) under the safety boundaries and its large-t value."""
    col = walk_column(params, SAFETY, 0, backend)
    table = walk_table(params, SAFETY, backend) if full else None
    limit = float(min(max(col[-1], 0.0), 1.0))
    change = float(col[-1] - col[-2]) if len(col) > 1 else float("nan")
    return SafetyResult(col, limit, change, table)


# ---------------------------------------------------------------------------
# Closed forms


def liveness_ratio(eps: float) -> float:
    return (math.sqrt(16 * eps * eps + 12 * eps + 3) - 1) / (4 * eps + 1)


def liveness_prefactor(eps: float) -> float:
    return (2 - 4 * eps) / (3 - 4 * eps - 2 * liveness_ratio(eps))


def liveness_closed_form(t: int, z: int, params: WalkParams) -> float:
    """Asymptotic form A * p**(z - t), clamped to [0, 1]."""
    eps = params.epsilon
    value = liveness_prefactor(eps) * liveness_ratio(eps) ** (z - t)
    return min(max(value, 0.0), 1.0)


def safety_ratio(eps: float) -> float:
    """Down/up odds of the walk, 2(1 - 2 eps)/(1 + 4 eps)."""
    return 2 * (1 - 2 * eps) / (1 + 4 * eps)


def safety_closed_form(kappa: int, eps: float) -> float:
    return safety_ratio(eps) ** (-kappa)


# ---------------------------------------------------------------------------
# Liveness decay


@dataclass(frozen=True)
class DecayFit:
    slope: float
    intercept: float
    r2: float


def liveness_failure(params: WalkParams, backend: str | None = None) -> np.ndarray:
    """1 - P(r, 0) for r = 0..t_max: probability the honest side has not yet
    pulled kappa rounds ahead."""
    return 1.0 - np.clip(walk_column(params, LIVENESS, 0, backend), 0.0, 1.0)


def log_linear_fit(r: np.ndarray, y: np.ndarray) -> DecayFit:
    ly = np.log(y)
    slope, intercept = np.polyfit(r, ly, 1)
    resid = ly - (slope * r + intercept)
    ss_tot = float(((ly - ly.mean()) ** 2).sum())
    r2 = 1.0 - float((resid**2).sum()) / ss_tot if ss_tot > 0 else 1.0
    return DecayFit(float(slope), float(intercept), r2)


def liveness_decay_fit(eps: float, kappa: int, lo: int | None = None, hi: int | None = None) -> DecayFit:
    """Log-linear fit of the liveness failure probability over r in [lo, hi]
    (default [5 kappa, 20 kappa])."""
    lo = 5 * kappa if lo is None else lo
    hi = 20 * kappa if hi is None else hi
    fail = liveness_failure(WalkParams(eps, kappa, hi))
    r = np.arange(lo, hi + 1)
    return log_linear_fit(r.astype(float), fail[lo : hi + 1])
