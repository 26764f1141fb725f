from .formulas import (
    BITCOIN_CONFIRMATION_S,
    FairnessParams,
    RewardScheme,
    epsilon,
    expected_utility,
    frontrunning_bound,
    regime_warnings,
    round_duration,
    throughput_best_case,
    time_to_finality,
)
from .montecarlo import RaceEstimate, fork_race_montecarlo, fork_race_sweep
from .walk import (
    LIVENESS,
    SAFETY,
    DecayFit,
    SafetyResult,
    WalkParams,
    WalkTable,
    liveness_closed_form,
    liveness_decay_fit,
    liveness_failure,
    liveness_prefactor,
    liveness_ratio,
    liveness_walk,
    safety_closed_form,
    safety_ratio,
    safety_walk,
    walk_column,
    walk_table,
)

__all__ = [
    "BITCOIN_CONFIRMATION_S",
    "DecayFit",
    "FairnessParams",
    "LIVENESS",
    "RaceEstimate",
    "RewardScheme",
    "SAFETY",
    "SafetyResult",
    "WalkParams",
    "WalkTable",
    "epsilon",
    "expected_utility",
    "frontrunning_bound",
    "fork_race_montecarlo",
    "fork_race_sweep",
    "liveness_closed_form",
    "liveness_decay_fit",
    "liveness_failure",
    "liveness_prefactor",
    "liveness_ratio",
    "liveness_walk",
    "regime_warnings",
    "round_duration",
    "safety_closed_form",
    "safety_ratio",
    "safety_walk",
    "throughput_best_case",
    "time_to_finality",
    "walk_column",
    "walk_table",
]
