import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import random_mdp, random_policy
from ilde.function_class import FeatureMap
from ilde.imitation import (
    Discriminator,
    LinearRewardClass,
    RewardParams,
    discriminator_loss,
    discriminator_reward,
    empirical_loss_hat,
    exact_ipm,
    feature_occupancy,
    gan_value,
    importance_weights,
    pgd_reward_step,
    train_discriminator,
)
from ilde.mdp import EpisodicMdp, StochasticPolicy, expected_return, make_demos, rollout


def one_hot_class(S, A, radius=1.0):
    return LinearRewardClass(FeatureMap.one_hot(S, A), radius)


def random_reward(rng, S, A, radius=1.0):
    theta = rng.normal(size=S * A)
    theta *= rng.uniform(0, radius) / np.linalg.norm(theta)
    return RewardParams(theta, one_hot_class(S, A, radius))


def two_state_mdp(H=3):
    P = np.zeros((H, 2, 2, 2))
    P[:, :, 0, 0] = 1.0  # action 0 goes to state 0
    P[:, :, 1, 1] = 1.0  # action 1 goes to state 1
    return EpisodicMdp(P, np.array([[0.0, 0.5], [1.0, -0.5]]), np.array([0.5, 0.5]))


def fd_grad(f, x, eps=1e-5):
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = eps
        g[i] = (f(x + e) - f(x - e)) / (2 * eps)
    return g


def test_unit_ratio_and_zero_reward(rng):
    mdp = random_mdp(rng, 3, 2, 4)
    pol = random_policy(rng, 4, 3, 2)
    demos = make_demos(mdp, pol, 5)
    batch = rollout(mdp, pol, 1, 20)
    np.testing.assert_allclose(importance_weights(batch, pol, pol), 1.0)
    reward = random_reward(rng, 3, 2)
    table = reward.table()
    expected = table[demos.trajectories.states, demos.trajectories.actions].sum(1).mean() - table[batch.states, batch.actions].sum(1).mean()
    assert empirical_loss_hat(demos, batch, pol, pol, reward) == pytest.approx(expected, abs=1e-12)
    assert empirical_loss_hat(demos, batch, pol, pol, RewardParams.zeros(one_hot_class(3, 2))) == 0.0


def test_zero_probability_rejected(rng):
    mdp = random_mdp(rng, 3, 2, 2)
    pol = StochasticPolicy.uniform(2, 3, 2)
    batch = rollout(mdp, pol, 0, 10)
    greedy = StochasticPolicy.greedy(rng.normal(size=(2, 3, 2)))
    with pytest.raises(ValueError):
        importance_weights(batch, pol, greedy)
    with pytest.raises(ValueError):
        importance_weights(batch, pol, pol, ratio_clip=0.5)


def test_loss_hat_unbiased_on_enumerable_mdp():
    mdp = two_state_mdp()
    rng = np.random.default_rng(2)
    expert = random_policy(rng, 3, 2, 2)
    demos = make_demos(mdp, expert, 4, 1, 0.0, 1)
    sampler = StochasticPolicy.uniform(3, 2, 2)
    target = random_policy(rng, 3, 2, 2)
    reward = random_reward(rng, 2, 2)
    table = reward.table()
    demo_avg = table[demos.trajectories.states, demos.trajectories.actions].sum(1).mean()
    big = rollout(mdp, sampler, 3, 5 * 10**4)
    values = np.array([
        empirical_loss_hat(demos, big[i : i + 5], sampler, target, reward, ratio_clip=math.inf)
        for i in range(0, 5 * 10**4, 5)
    ])
    exact = demo_avg - expected_return(mdp, target, table)
    assert abs(values.mean() - exact) <= 4 * values.std(ddof=1) / math.sqrt(len(values))


def test_loss_hat_gradient(rng):
    mdp = random_mdp(rng, 3, 2, 4)
    demos = make_demos(mdp, random_policy(rng, 4, 3, 2), 6)
    sampler, target = random_policy(rng, 4, 3, 2), random_policy(rng, 4, 3, 2)
    batch = rollout(mdp, sampler, 4, 30)
    reward = random_reward(rng, 3, 2, radius=0.8)
    _, grad = empirical_loss_hat(demos, batch, sampler, target, reward, with_grad=True)
    cls = reward.reward_class
    fd = fd_grad(lambda th: empirical_loss_hat(demos, batch, sampler, target, RewardParams(th, LinearRewardClass(cls.feature_map, 10.0))), reward.theta)
    assert np.linalg.norm(grad - fd) <= 1e-4 * np.linalg.norm(fd)


def test_pgd_examples():
    cls = one_hot_class(2, 1)
    r = RewardParams.zeros(cls)
    np.testing.assert_array_equal(pgd_reward_step(r, np.zeros(2), 0.1).theta, r.theta)
    np.testing.assert_allclose(pgd_reward_step(r, -np.eye(2)[0], 0.1).theta, [0.1, 0.0])
    edge = RewardParams(np.array([1.0, 0.0]), cls)
    assert np.linalg.norm(pgd_reward_step(edge, np.array([-3.0, -1.0]), 0.5).theta) == pytest.approx(1.0, abs=1e-15)
    with pytest.raises(ValueError):
        pgd_reward_step(r, np.array([np.nan, 0.0]), 0.1)
    with pytest.raises(ValueError):
        pgd_reward_step(r, np.zeros(2), 0.0)


@given(st.integers(0, 2**31))
def test_pgd_stays_feasible(seed):
    rng = np.random.default_rng(seed)
    r = RewardParams.zeros(one_hot_class(3, 2, 0.7))
    for _ in range(30):
        r = pgd_reward_step(r, rng.normal(scale=5, size=6), rng.uniform(0.01, 2))
        assert np.linalg.norm(r.theta) <= 0.7 * (1 + 1e-12)


def test_ipm_examples(rng):
    mdp = random_mdp(rng, 3, 2, 3)
    a, b = random_policy(rng, 3, 3, 2), random_policy(rng, 3, 3, 2)
    assert exact_ipm(mdp, a, a, one_hot_class(3, 2)) == 0.0
    assert exact_ipm(mdp, a, b, one_hot_class(3, 2, 0.0)) == 0.0
    with pytest.raises(ValueError):
        exact_ipm(mdp, a, b, LinearRewardClass(FeatureMap.one_hot(3, 2), 1.0, symmetric=False))


def test_ipm_closed_form_vs_random_search():
    rng = np.random.default_rng(5)
    for _ in range(3):
        mdp = random_mdp(rng, 2, 2, 3)
        a, b = random_policy(rng, 3, 2, 2), random_policy(rng, 3, 2, 2)
        cls = one_hot_class(2, 2)
        closed = exact_ipm(mdp, a, b, cls)
        thetas = rng.normal(size=(10**5, 4))
        thetas /= np.linalg.norm(thetas, axis=1, keepdims=True)
        gap = feature_occupancy(mdp, a, cls.feature_map) - feature_occupancy(mdp, b, cls.feature_map)
        lower = np.max(np.abs(thetas @ gap))
        # spot-check that the linear form is the true return difference
        for th in thetas[:5]:
            table = RewardParams(th, cls).table()
            assert th @ gap == pytest.approx(expected_return(mdp, a, table) - expected_return(mdp, b, table), abs=1e-12)
        assert closed >= lower - 1e-12
        assert closed - lower <= 1e-3 * closed


def test_ipm_metric_properties():
    rng = np.random.default_rng(8)
    mdp = random_mdp(rng, 3, 2, 4)
    cls = one_hot_class(3, 2)
    for _ in range(50):
        a, b, c = (random_policy(rng, 4, 3, 2) for _ in range(3))
        ab, ba = exact_ipm(mdp, a, b, cls), exact_ipm(mdp, b, a, cls)
        assert ab == ba and ab >= 0
        assert exact_ipm(mdp, a, c, cls) <= ab + exact_ipm(mdp, b, c, cls) + 1e-9


def batches(rng, n=8, S=3, A=2):
    return (rng.integers(0, S, n), rng.integers(0, A, n)), (rng.integers(0, S, n + 3), rng.integers(0, A, n + 3))


def test_zero_weights_half_probability(rng):
    disc = Discriminator.create(FeatureMap.one_hot(3, 2))
    demo, pol = batches(rng)
    np.testing.assert_allclose(disc.prob(*demo), 0.5)
    assert gan_value(disc, demo, pol) == pytest.approx(2 * math.log(0.5))
    assert discriminator_loss(disc, demo, pol)[0] == pytest.approx(-2 * math.log(0.5))
    assert discriminator_reward(disc, 0, 1) == pytest.approx(math.log(2))


def test_plain_loss_without_bottleneck(rng):
    fm = FeatureMap.one_hot(3, 2)
    disc = Discriminator(fm, rng.normal(size=7))
    demo, pol = batches(rng)
    loss, _ = discriminator_loss(disc, demo, pol)
    assert loss == pytest.approx(-gan_value(disc, demo, pol), abs=1e-12)


@pytest.mark.parametrize("bottleneck", [False, True])
def test_discriminator_gradient(bottleneck):
    rng = np.random.default_rng(21 + bottleneck)
    disc = Discriminator.create(FeatureMap.one_hot(3, 2), bottleneck=bottleneck, latent_dim=3, beta=0.7, rng_seed=4, init_scale=0.5)
    disc = disc.with_params(disc.params + 0.3 * rng.normal(size=disc.num_params()))
    demo, pol = batches(rng)
    ne = rng.normal(size=(8, 3)) if bottleneck else None
    npol = rng.normal(size=(11, 3)) if bottleneck else None
    _, grad = discriminator_loss(disc, demo, pol, ne, npol)
    fd = fd_grad(lambda p: discriminator_loss(disc, demo, pol, ne, npol, params=p)[0], disc.params)
    assert np.linalg.norm(grad - fd) <= 1e-4 * np.linalg.norm(fd)


def test_reward_vanishes_when_d_small():
    fm = FeatureMap.one_hot(2, 1)
    disc = Discriminator(fm, np.array([-20.0, -20.0, 0.0]))
    assert disc.prob(0, 0) <= 1e-6
    assert discriminator_reward(disc, 0, 0) <= 1e-6


def test_training_separates_disjoint_supports():
    fm = FeatureMap.one_hot(4, 2)
    demo = (np.array([0, 1, 0, 1]), np.array([0, 1, 0, 1]))
    pol = (np.array([2, 3, 2, 3]), np.array([1, 0, 0, 1]))
    for bottleneck in (False, True):
        disc = Discriminator.create(fm, bottleneck=bottleneck, rng_seed=1)
        disc = train_discriminator(disc, demo, pol, steps=200, rng=np.random.default_rng(0))
        assert discriminator_reward(disc, *demo).mean() > discriminator_reward(disc, *pol).mean()
        assert np.all(discriminator_reward(disc, *demo) >= 0)


def test_bottleneck_requires_rng():
    disc = Discriminator.create(FeatureMap.one_hot(2, 2), bottleneck=True)
    demo = (np.array([0]), np.array([0]))
    with pytest.raises(ValueError):
        train_discriminator(disc, demo, demo, steps=1)


def test_round_trip():
    fm = FeatureMap.one_hot(3, 2)
    disc = Discriminator.create(fm, bottleneck=True, rng_seed=3)
    back = Discriminator.from_kv(disc.to_kv(), fm)
    np.testing.assert_array_equal(back.params, disc.params)
    assert back.bottleneck and back.latent_dim == disc.latent_dim
