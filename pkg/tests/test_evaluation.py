import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_mdp, random_policy
from ilde.curiosity import expected_intrinsic, fit_demo_model
from ilde.evaluation import (
    NEVER,
    compute_regret,
    improvement_vs_expert,
    loglog_slope,
    saddle_loss,
    saddle_policy,
    sample_efficiency,
    worst_case_loss,
)
from ilde.function_class import FeatureMap
from ilde.imitation import LinearRewardClass, RewardParams
from ilde.mdp import StochasticPolicy, expected_return, make_demos


def instance(seed, S=2, A=2, H=2):
    rng = np.random.default_rng(seed)
    m = random_mdp(rng, S, A, H)
    expert = random_policy(rng, H, S, A)
    model = fit_demo_model(make_demos(m, expert, 3, rng_seed=seed), S, A, 0.1)
    return rng, m, expert, model, LinearRewardClass(FeatureMap.one_hot(S, A))


def deterministic_policies(H, S, A):
    for choice in itertools.product(range(A), repeat=H * S):
        yield StochasticPolicy(np.eye(A)[np.array(choice).reshape(H, S)])


def test_saddle_loss_examples():
    rng, m, expert, model, cls = instance(0)
    for _ in range(5):
        r = rng.normal(size=(2, 2))
        assert saddle_loss(m, expert, r, expert) == pytest.approx(0.0, abs=1e-15)
    assert saddle_loss(m, random_policy(rng, 2, 2, 2), np.zeros((2, 2)), expert) == 0.0


def test_saddle_loss_decomposition():
    rng, m, expert, model, cls = instance(1)
    pol, r = random_policy(rng, 2, 2, 2), rng.normal(size=(2, 2))
    expected = expected_return(m, expert, r) - expected_return(m, pol, r) - 3.0 * expected_intrinsic(m, pol, model)
    assert saddle_loss(m, pol, r, expert, model, 3.0) == pytest.approx(expected, abs=1e-12)
    with pytest.raises(ValueError):
        saddle_loss(m, pol, r, expert, None, 1.0)


@pytest.mark.parametrize("lam", [0.0, 0.5])
def test_saddle_policy_beats_exhaustive_search(lam):
    for seed in range(4):
        _, m, expert, model, cls = instance(seed)
        pi_star, value = saddle_policy(m, expert, cls, model, lam)
        assert worst_case_loss(m, pi_star, expert, cls, model, lam) == pytest.approx(value, abs=1e-6)
        best = min(worst_case_loss(m, p, expert, cls, model, lam) for p in deterministic_policies(2, 2, 2))
        assert value <= best + 1e-6


def test_regret_zero_on_reference_sequence():
    _, m, expert, model, cls = instance(2)
    pi_star, _ = saddle_policy(m, expert, cls, model, 0.3)
    ledger = compute_regret(m, [pi_star] * 7, cls, pi_star, expert, model, 0.3)
    np.testing.assert_allclose(ledger.regret_curve, 0.0, atol=1e-12)


def test_regret_single_expert_step_nonnegative():
    _, m, expert, model, cls = instance(3)
    pi_star, _ = saddle_policy(m, expert, cls)
    assert compute_regret(m, [expert], cls, pi_star, expert).total >= -1e-7


@settings(max_examples=15)
@given(st.integers(0, 10**6), st.sampled_from([0.0, 0.4]))
def test_regret_nonnegative_and_additive(seed, lam):
    rng, m, expert, model, cls = instance(seed)
    pi_star, _ = saddle_policy(m, expert, cls, model, lam)
    policies = [random_policy(rng, 2, 2, 2) for _ in range(int(rng.integers(1, 8)))]
    ledger = compute_regret(m, policies, cls, pi_star, expert, model, lam)
    assert ledger.total >= -1e-6
    assert ledger.cumulative[-1] == pytest.approx(ledger.total, abs=1e-10)
    assert [r["t"] for r in ledger.rows()] == list(range(1, len(policies) + 1))


def test_regret_closed_form_vs_random_search():
    rng, m, expert, model, cls = instance(9)
    lam = 0.2
    pi_star, _ = saddle_policy(m, expert, cls, model, lam)
    policies = [random_policy(rng, 2, 2, 2) for _ in range(10)]
    closed = compute_regret(m, policies, cls, pi_star, expert, model, lam).total
    thetas = rng.normal(size=(10**5, 4))
    thetas /= np.linalg.norm(thetas, axis=1, keepdims=True)
    # sum_t l(pi_t, r) - l(pi*, r) evaluated directly for a few rewards, then vectorized via linearity
    basis = np.eye(4)
    per_basis = np.array([
        sum(saddle_loss(m, p, RewardParams(e, cls).table(), expert) - saddle_loss(m, pi_star, RewardParams(e, cls).table(), expert) for p in policies)
        for e in basis
    ])
    offset = sum(-lam * (expected_intrinsic(m, p, model) - expected_intrinsic(m, pi_star, model)) for p in policies)
    for th in thetas[:3]:
        direct = sum(saddle_loss(m, p, RewardParams(th, cls).table(), expert, model, lam)
                     - saddle_loss(m, pi_star, RewardParams(th, cls).table(), expert, model, lam) for p in policies)
        assert th @ per_basis + offset == pytest.approx(direct, abs=1e-10)
    lower = np.max(thetas @ per_basis) + offset
    assert closed >= lower - 1e-10
    assert closed - lower <= 1e-3 * abs(closed)


def test_loglog_slope():
    t = np.arange(1, 201)
    assert loglog_slope(3 * t ** (2 / 3)) == pytest.approx(2 / 3, abs=1e-12)
    with pytest.raises(ValueError):
        loglog_slope(np.zeros(10))


def test_sample_efficiency_examples():
    assert sample_efficiency([0, 1, 2], 5, 3) == NEVER
    assert sample_efficiency([6, 7, 8, 9], 5, 40, [10, 20, 30, 40]) == 0.25
    j = [0, 1, 0, 6, 7, 6, 8, 9]
    assert sample_efficiency(j, 5, 8) == 0.5
    assert sample_efficiency([6, 7, 1], 5, 3) == NEVER
    with pytest.raises(ValueError):
        sample_efficiency([], 1, 1)


def test_improvement_examples():
    assert improvement_vs_expert([2.5, 2.5], 2.5) == 1.0
    assert improvement_vs_expert([4.0, 4.0], 2.0) == 2.0
    assert improvement_vs_expert(np.array([1, 2, 3]) * -1.5, -1.5) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        improvement_vs_expert([1.0], 0.0)
