from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from interlude import _accel
from interlude.analysis import (
    LIVENESS,
    SAFETY,
    FairnessParams,
    RewardScheme,
    WalkParams,
    epsilon,
    expected_utility,
    fork_race_montecarlo,
    fork_race_sweep,
    frontrunning_bound,
    liveness_closed_form,
    liveness_decay_fit,
    liveness_prefactor,
    liveness_ratio,
    liveness_walk,
    regime_warnings,
    safety_closed_form,
    safety_ratio,
    safety_walk,
    throughput_best_case,
    time_to_finality,
    walk_column,
    walk_table,
)
from interlude.analysis.enumerate import hitting_probability
from interlude.crypto import ParameterError

EPS_PAPER = math.expm1(40 / 600)
needs_numba = pytest.mark.skipif(not _accel.HAVE_NUMBA, reason="numba disabled")


# -- delay penalty and closed forms ------------------------------------------------


def test_epsilon_values():
    assert epsilon(1 / 600, 0) == 0
    assert epsilon(1 / 600, 40) == pytest.approx(0.0689391057, rel=1e-9)
    assert epsilon(0.05 / 40, 40) == pytest.approx(0.0512710964, rel=1e-9)
    with pytest.raises(ParameterError):
        epsilon(-1, 1)


@given(st.floats(0, 0.01), st.floats(0, 100), st.floats(0, 0.01))
def test_epsilon_monotone(beta, delta, more):
    assert epsilon(beta + more, delta) >= epsilon(beta, delta)
    assert epsilon(beta, delta + more) >= epsilon(beta, delta)


def test_liveness_constants_at_zero_penalty():
    assert liveness_ratio(0) == pytest.approx(math.sqrt(3) - 1)
    assert liveness_prefactor(0) == pytest.approx(2 / (3 - 2 * (math.sqrt(3) - 1)))
    assert liveness_prefactor(0) == pytest.approx(1.30217, abs=1e-5)
    assert liveness_closed_form(5, 5, WalkParams(0, 2, 5)) == 1.0


@pytest.mark.parametrize("eps", [0.0, 0.02, EPS_PAPER])
def test_closed_form_solves_the_literal_interior_recursion(eps):
    p, a = liveness_ratio(eps), liveness_prefactor(eps)
    f = lambda t, z: a * p ** (z - t)  # noqa: E731
    wp = WalkParams(eps, 2, 1, "literal")
    for t, z in [(3, 0), (7, 2), (12, -1)]:
        rhs = wp.down * f(t - 1, z - 1) + wp.stay * f(t - 1, z) + wp.up * f(t - 1, z + 1)
        assert rhs == pytest.approx(f(t, z), rel=1e-12)


@pytest.mark.parametrize("kappa", [1, 2, 3, 14])
def test_closed_form_tracks_table_far_from_start(kappa):
    wp = WalkParams(0.0, kappa, 20 * kappa)
    table = liveness_walk(wp)
    for t in range(10 * kappa, 20 * kappa + 1):
        v = table.p(t, 0)
        assert abs(liveness_closed_form(t, 0, wp) - v) <= 0.2 * v


def test_safety_ratio_and_closed_form():
    assert safety_ratio(0) == 2
    assert safety_closed_form(14, 0) == pytest.approx(6.1035e-5, rel=1e-4)


def test_frontrunning_bound_values():
    assert frontrunning_bound(FairnessParams(1.0, 0.5, 40, 0.05 / 40, 40)) == pytest.approx(1 / 19)
    assert frontrunning_bound(FairnessParams(0.1, 0.5, 0, 1 / 600, 40)) == 0
    assert frontrunning_bound(FairnessParams(0.1, 0.5, 40, 1 / 600, 40)) == pytest.approx(0.0071428571)
    with pytest.raises(ParameterError):
        frontrunning_bound(FairnessParams(0.1, 0.5, 40, 1 / 40, 40))


def test_throughput_formula():
    assert throughput_best_case(1 / 600, 40, 0) == pytest.approx((1 / 600) / (2 - 40 / 600))
    assert throughput_best_case(1 / 600, 40, 1159) == pytest.approx(1.0, rel=0.01)
    assert throughput_best_case(1 / 600, 40, 9) == pytest.approx(2 * throughput_best_case(1 / 600, 40, 4))
    with pytest.raises(ParameterError):
        throughput_best_case(0.1, 20, 4)


def test_finality_formula():
    assert time_to_finality(14, 1 / 600, 40) == pytest.approx(16_240)
    assert time_to_finality(14, 1 / 600, 40) / 9000 == pytest.approx(1.8, abs=0.01)
    assert time_to_finality(0, 1 / 600, 40) == 0


def test_regime_warnings():
    assert regime_warnings(128, 128 / 500, 1 / 600, 20, 0.3) == []
    msgs = regime_warnings(16, 16 / 560, 1 / 600, 40, 0.6)
    assert len(msgs) == 4


def test_utility_examples():
    rs = RewardScheme(eta_cost=2.0, beta=1 / 600, lam=0.1, gamma=10)
    assert rs.reward_series == pytest.approx(1200) and rs.reward_parallel == pytest.approx(20)
    assert expected_utility("honest", rs, 0.0, 0) == 0
    assert expected_utility("honest", rs, 0.3, 5) == 5
    with pytest.raises(ParameterError):
        expected_utility("honest", rs, 1.0, 11)


@given(st.floats(0, 1), st.floats(0, 10), st.sampled_from(["parallel", "series"]))
def test_utility_within_zero_and_gamma(p, fee, kind):
    rs = RewardScheme(eta_cost=1.0, beta=1 / 600, lam=0.1, gamma=10)
    for play in ("honest", "dummy"):
        assert 0 <= expected_utility(play, rs, p, fee, kind) <= rs.gamma


# -- random walk -------------------------------------------------------------------


def test_liveness_boundaries_and_one_step():
    table = liveness_walk(WalkParams(0.0, 1, 6))
    assert all(table.p(t, -1) == 1.0 for t in range(7))
    assert table.p(1, 0) == 0.5
    assert table.p(0, 0) == 0.0


def test_safety_boundary_row():
    res = safety_walk(WalkParams(0.03, 3, 10), full=True)
    assert all(res.table.p(t, 3) == 1.0 for t in range(11))
    # lowest state from which kappa is reachable within t rounds
    for t in range(11):
        assert res.table.p(t, 3 - 1 - t) == 0.0


@settings(max_examples=15, deadline=None)
@given(st.floats(0, 0.07), st.integers(1, 4))
def test_table_entries_are_probabilities_and_monotone(eps, kappa):
    t = liveness_walk(WalkParams(eps, kappa, 30))
    v = t.values
    assert ((0 <= v) & (v <= 1)).all()
    assert (np.diff(v, axis=0) >= -1e-15).all()  # nondecreasing in t
    assert (np.diff(v, axis=1) <= 1e-15).all()  # nonincreasing in z


@pytest.mark.parametrize("regime", [LIVENESS, SAFETY])
@pytest.mark.parametrize("coefficients", ["stochastic", "literal"])
def test_recursion_matches_enumeration_small(regime, coefficients):
    wp = WalkParams(0.04, 2, 8, coefficients)
    table = walk_table(wp, regime)
    for t in range(9):
        for z in range(table.z_min, table.z_max + 1):
            assert table.p(t, z, raw=True) == pytest.approx(hitting_probability(wp, regime, t, z), abs=1e-12)


def test_safety_limit_halves_per_extra_kappa():
    a = safety_walk(WalkParams(0.0, 6, 4000)).limit
    b = safety_walk(WalkParams(0.0, 7, 4000)).limit
    assert b < a and a / b == pytest.approx(2.0, rel=0.01)


@pytest.mark.parametrize("eps", [0.0, 0.03, EPS_PAPER])
def test_safety_limit_matches_closed_form(eps):
    res = safety_walk(WalkParams(eps, 5, 3000))
    assert res.limit == pytest.approx(safety_closed_form(5, eps), rel=1e-6)
    assert abs(res.tail_change) < 1e-12


def test_literal_coefficients_exceed_one():
    raw = walk_column(WalkParams(0.0, 2, 60, "literal"), LIVENESS)
    assert raw[-1] > 1
    assert liveness_walk(WalkParams(0.0, 2, 60, "literal")).values.max() == 1.0


def test_walk_params_validation():
    with pytest.raises(ParameterError):
        WalkParams(0.0, 0, 5)
    with pytest.raises(ParameterError):
        WalkParams(0.6, 1, 5)
    with pytest.raises(ParameterError):
        WalkParams(0.0, 1, 5, "other")


def test_decay_slope_negative():
    fit = liveness_decay_fit(EPS_PAPER, 14)
    assert fit.slope < 0 and fit.r2 >= 0.99


# -- backends -------------------------------------------------------------------------


@needs_numba
@pytest.mark.parametrize("regime", [LIVENESS, SAFETY])
def test_walk_backends_agree_bitwise(regime):
    wp = WalkParams(EPS_PAPER, 4, 200)
    a = walk_table(wp, regime, backend="numba").raw
    b = walk_table(wp, regime, backend="numpy").raw
    assert np.array_equal(a, b)
    assert np.array_equal(walk_column(wp, regime, 0, "numba"), walk_column(wp, regime, 0, "numpy"))


@needs_numba
def test_race_backends_agree_in_distribution():
    args = (2, 32, 10, 0.5, 32 / 560, 1 / 600, 40, 200_000)
    a = fork_race_montecarlo(*args, seed=1, backend="numba")
    b = fork_race_montecarlo(*args, seed=1, backend="numpy")
    for x, y, sx, sy in [(a.p_first, b.p_first, a.se_first, b.se_first), (a.p_second, b.p_second, a.se_second, b.se_second)]:
        assert abs(x - y) <= 4 * math.hypot(sx, sy) + 1e-12


def test_unknown_backend_rejected():
    with pytest.raises(ValueError):
        walk_column(WalkParams(0.0, 1, 3), LIVENESS, 0, "fortran")


# -- fork race Monte Carlo ---------------------------------------------------------------


def test_race_without_adversary_never_succeeds():
    # the adversary never finishes, so the honest side always gets there first
    est = fork_race_montecarlo(2, 16, 3, 0.0, 16 / 560, 1 / 600, 40, 20_000)
    assert est.p_first == 1 and est.p_second == 0 and est.p_joint == 0


def test_race_estimates_are_consistent():
    est = fork_race_montecarlo(2, 16, 4, 0.4, 16 / 560, 1 / 600, 40, 50_000, seed=3)
    assert 0 <= est.p_joint <= min(est.p_first, est.p_second)
    assert est.se_joint == pytest.approx(math.sqrt(est.p_joint * (1 - est.p_joint) / 50_000))
    assert est.warnings  # k = 16 is below the large-k regime


def test_race_first_event_closed_form_at_h_equal_k_minus_one():
    # adversary needs one block at rate alpha*lam before the honest side mines f*h
    f, k, h, alpha = 1, 8, 7, 0.5
    est = fork_race_montecarlo(f, k, h, alpha, 1.0, 1 / 600, 40, 200_000, seed=5)
    exact = 1 - (1 / (1 + alpha)) ** (f * h)
    assert abs((1 - est.p_first) - exact) <= 4 * est.se_first


def test_level_variant_series_race_approaches_alpha_over_one_plus_alpha():
    alpha = 1 / 3
    est = fork_race_montecarlo(1, 16, 1, alpha, 1e6, 1 / 600, 0.0, 200_000, seed=2, variant="level")
    assert est.p_second == pytest.approx(alpha / (1 + alpha), abs=4 * est.se_second)


def test_se_scales_with_inverse_root_samples():
    a = fork_race_montecarlo(2, 16, 4, 0.45, 16 / 560, 1 / 600, 40, 10_000, seed=1)
    b = fork_race_montecarlo(2, 16, 4, 0.45, 16 / 560, 1 / 600, 40, 160_000, seed=1)
    assert a.se_second / b.se_second == pytest.approx(4.0, rel=0.15)


def test_sweep_covers_requested_h():
    out = fork_race_sweep(2, 8, 0.3, 8 / 560, 1 / 600, 40, samples=2000)
    assert [e.h for e in out] == list(range(1, 8))
    with pytest.raises(ValueError):
        fork_race_montecarlo(1, 8, 1, 0.3, 1.0, 1 / 600, 40, variant="other")
