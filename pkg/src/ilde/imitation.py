"""Imitation rewards: a linear reward class trained by projected gradient steps,
a logistic discriminator with optional variational bottleneck, and the exact
IPM between two policies."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kvformat
from .function_class import FeatureMap, project_ball
from .mdp import DemoSet, EpisodicMdp, StochasticPolicy, TrajectoryBatch, occupancy_measure
from .rng import derive_rng


@dataclass(frozen=True, eq=False)
class LinearRewardClass:
    """Rewards ``clip(<theta, phi(s,a)>, -1, 1)`` with ``||theta|| <= radius``.

    A ball is closed under negation, so the class is symmetric unless a caller
    says otherwise (``symmetric=False`` is only used to describe foreign classes).
    """

    feature_map: FeatureMap
    radius: float = 1.0
    symmetric: bool = True

    def __post_init__(self):
        if self.radius < 0:
            raise ValueError("radius must be nonnegative")


@dataclass(frozen=True, eq=False)
class RewardParams:
    theta: np.ndarray
    reward_class: LinearRewardClass

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float)
        if theta.shape != (self.reward_class.feature_map.dim,):
            raise ValueError("theta has the wrong dimension")
        if np.linalg.norm(theta) > self.reward_class.radius * (1 + 1e-12):
            raise ValueError("theta lies outside the parameter ball")
        object.__setattr__(self, "theta", theta)

    @classmethod
    def zeros(cls, reward_class: LinearRewardClass) -> RewardParams:
        return cls(np.zeros(reward_class.feature_map.dim), reward_class)

    def logits(self) -> np.ndarray:
        return self.reward_class.feature_map.matrix @ self.theta

    def table(self) -> np.ndarray:
        fm = self.reward_class.feature_map
        return np.clip(self.logits(), -1.0, 1.0).reshape(fm.num_states, fm.num_actions)

    def to_kv(self) -> dict:
        data = {"format": "ilde-reward", "version": 1, "radius": float(self.reward_class.radius)}
        data["theta"] = self.theta.tolist()
        return data


def _trajectory_log_ratio(batch: TrajectoryBatch, eval_policy, batch_policy):
    L = batch.length
    steps = np.broadcast_to(np.arange(L), batch.states.shape)
    p_new = eval_policy.probs[steps, batch.states, batch.actions]
    p_old = batch_policy.probs[steps, batch.states, batch.actions]
    if np.any(p_old <= 0):
        raise ValueError("batch policy gives zero probability to an observed action")
    with np.errstate(divide="ignore"):
        return np.sum(np.log(p_new) - np.log(p_old), axis=1)


def importance_weights(batch, eval_policy, batch_policy, ratio_clip=10.0) -> np.ndarray:
    """Per-trajectory ratio ``clip(prod_h pi(a_h|s_h) / pi_old(a_h|s_h), 0, ratio_clip)``."""
    if ratio_clip < 1:
        raise ValueError("ratio_clip must be at least 1")
    log_w = _trajectory_log_ratio(batch, eval_policy, batch_policy)
    return np.minimum(np.exp(log_w), ratio_clip)


def _feature_sums(batch: TrajectoryBatch, reward: RewardParams):
    """Per-trajectory summed rewards and summed active features."""
    fm = reward.reward_class.feature_map
    idx = fm.index(batch.states, batch.actions)
    logits = reward.logits()[idx]
    rewards = np.clip(logits, -1.0, 1.0)
    active = (np.abs(logits) < 1.0).astype(float)
    feats = fm.matrix[idx] * active[..., None]
    return rewards.sum(axis=1), feats.sum(axis=1)


def empirical_loss_hat(demos: DemoSet, batch, batch_policy, eval_policy, reward: RewardParams, ratio_clip=10.0, with_grad=False):
    """Demo return average minus the importance-weighted batch return average.

    With ``with_grad`` returns ``(value, grad)`` where ``grad`` is the gradient
    with respect to ``theta`` (clipped rewards contribute zero).
    """
    if len(batch) == 0:
        raise ValueError("batch must be nonempty")
    w = importance_weights(batch, eval_policy, batch_policy, ratio_clip)
    demo_ret, demo_feat = _feature_sums(demos.trajectories, reward)
    batch_ret, batch_feat = _feature_sums(batch, reward)
    value = float(demo_ret.mean() - np.mean(w * batch_ret))
    if not with_grad:
        return value
    grad = demo_feat.mean(axis=0) - (w[:, None] * batch_feat).mean(axis=0)
    return value, grad


def pgd_reward_step(reward: RewardParams, grad, step_size) -> RewardParams:
    """``theta <- proj(theta - step_size * grad)`` onto the parameter ball."""
    if step_size <= 0:
        raise ValueError("step_size must be positive")
    grad = np.asarray(grad, dtype=float)
    if not np.all(np.isfinite(grad)):
        raise ValueError("gradient must be finite")
    theta = project_ball(reward.theta - step_size * grad, reward.reward_class.radius)
    return RewardParams(theta, reward.reward_class)


def feature_occupancy(mdp: EpisodicMdp, policy: StochasticPolicy, feature_map: FeatureMap) -> np.ndarray:
    """``sum_h sum_{s,a} d_h(s,a) phi(s,a)``; ``J(pi, r_theta) = <theta, .>`` when no clip is active."""
    d = occupancy_measure(mdp, policy).sum(axis=0).ravel()
    return d @ feature_map.matrix


def exact_ipm(mdp: EpisodicMdp, policy_a, policy_b, reward_class: LinearRewardClass) -> float:
    """``sup_r |J(pi_a, r) - J(pi_b, r)|`` over the ball class (pre-clip closed form)."""
    if not reward_class.symmetric:
        raise ValueError("the IPM closed form needs a symmetric reward class")
    gap = feature_occupancy(mdp, policy_a, reward_class.feature_map) - feature_occupancy(mdp, policy_b, reward_class.feature_map)
    return float(reward_class.radius * np.linalg.norm(gap))


# ---------------------------------------------------------------------------
# discriminator


def _softplus(x):
    return np.logaddexp(0.0, x)


def _sigmoid(x):
    return np.exp(-_softplus(-x))


@dataclass(eq=False)
class Discriminator:
    """Logistic discriminator ``D(s, a) = sigmoid(logit)`` over features ``phi(s, a)``.

    Without the bottleneck ``logit = w.phi + b``. With it, a linear-Gaussian
    encoder maps ``phi`` to ``z ~ N(W_mu phi, diag(exp(W_ls phi))^2)`` and
    ``logit = u.z + b``. Parameters live in one flat vector.
    """

    feature_map: FeatureMap
    params: np.ndarray
    bottleneck: bool = False
    latent_dim: int = 0
    beta: float = 1.0
    info_constraint: float = 0.2

    def __post_init__(self):
        self.params = np.asarray(self.params, dtype=float)
        if self.params.shape != (self.num_params(),):
            raise ValueError("parameter vector has the wrong size")
        if self.beta < 0:
            raise ValueError("beta must be nonnegative")

    @classmethod
    def create(cls, feature_map, bottleneck=False, latent_dim=4, beta=1.0, info_constraint=0.2, rng_seed=0, init_scale=0.1):
        d = feature_map.dim
        if not bottleneck:
            return cls(feature_map, np.zeros(d + 1), False, 0, beta, info_constraint)
        m = latent_dim
        rng = derive_rng(rng_seed, "discriminator-init")
        params = np.concatenate([
            init_scale * rng.standard_normal(m * d),  # W_mu
            np.zeros(m * d),  # W_ls
            init_scale * rng.standard_normal(m),  # u
            [0.0],  # b
        ])
        return cls(feature_map, params, True, m, beta, info_constraint)

    def num_params(self) -> int:
        d = self.feature_map.dim
        if not self.bottleneck:
            return d + 1
        m = self.latent_dim
        return 2 * m * d + m + 1

    def _unpack(self, params=None):
        p = self.params if params is None else params
        d, m = self.feature_map.dim, self.latent_dim
        if not self.bottleneck:
            return p[:d], p[d]
        W_mu = p[: m * d].reshape(m, d)
        W_ls = p[m * d : 2 * m * d].reshape(m, d)
        u = p[2 * m * d : 2 * m * d + m]
        return W_mu, W_ls, u, p[-1]

    def with_params(self, params) -> Discriminator:
        return Discriminator(self.feature_map, params, self.bottleneck, self.latent_dim, self.beta, self.info_constraint)

    def logits(self, states, actions, noise=None) -> np.ndarray:
        """Discriminator logits; the bottleneck uses ``z = mu`` unless ``noise`` is given."""
        phi = self.feature_map(np.asarray(states), np.asarray(actions))
        if not self.bottleneck:
            w, b = self._unpack()
            return phi @ w + b
        W_mu, W_ls, u, b = self._unpack()
        z = phi @ W_mu.T
        if noise is not None:
            z = z + np.exp(phi @ W_ls.T) * noise
        return z @ u + b

    def prob(self, states, actions) -> np.ndarray:
        return _sigmoid(self.logits(states, actions))

    def to_kv(self) -> dict:
        data = {
            "format": "ilde-discriminator",
            "version": 1,
            "bottleneck": self.bottleneck,
            "latent_dim": self.latent_dim,
            "beta": self.beta,
            "info_constraint": self.info_constraint,
        }
        data["params"] = self.params.tolist()
        return data

    @classmethod
    def from_kv(cls, data: dict, feature_map: FeatureMap) -> Discriminator:
        if data.get("format") != "ilde-discriminator":
            raise kvformat.KvFormatError("not an ilde-discriminator document")
        return cls(feature_map, np.asarray(data["params"]), data["bottleneck"], data["latent_dim"], data["beta"], data["info_constraint"])


def gan_value(disc: Discriminator, demo_batch, policy_batch, demo_noise=None, policy_noise=None) -> float:
    """``E_demo[log D] + E_policy[log(1 - D)]``: the quantity the discriminator ascends."""
    x_e = disc.logits(*demo_batch, noise=demo_noise)
    x_p = disc.logits(*policy_batch, noise=policy_noise)
    return float(-np.mean(_softplus(-x_e)) - np.mean(_softplus(x_p)))


def discriminator_loss(disc: Discriminator, demo_batch, policy_batch, demo_noise=None, policy_noise=None, params=None):
    """Loss minimized by the discriminator and its exact gradient.

    ``loss = -(E_demo[log D] + E_policy[log(1 - D)]) + beta (KL - I_c)`` where KL
    is the mean divergence of the encoder Gaussian from N(0, I) over the
    even mixture of demo and policy samples (bottleneck only). Batches are
    ``(states, actions)`` pairs; noise arrays fix the reparameterization draws.
    """
    d = disc if params is None else disc.with_params(params)
    (s_e, a_e), (s_p, a_p) = demo_batch, policy_batch
    if len(np.atleast_1d(s_e)) == 0 or len(np.atleast_1d(s_p)) == 0:
        raise ValueError("both batches must be nonempty")
    fm = d.feature_map
    phi_e = fm(np.asarray(s_e), np.asarray(a_e))
    phi_p = fm(np.asarray(s_p), np.asarray(a_p))
    n_e, n_p = len(phi_e), len(phi_p)

    if not d.bottleneck:
        w, b = d._unpack()
        x_e, x_p = phi_e @ w + b, phi_p @ w + b
        loss = float(np.mean(_softplus(-x_e)) + np.mean(_softplus(x_p)))
        # d(-log D)/dx = D - 1, d(-log(1 - D))/dx = D
        g_e = (_sigmoid(x_e) - 1.0) / n_e
        g_p = _sigmoid(x_p) / n_p
        grad = np.concatenate([phi_e.T @ g_e + phi_p.T @ g_p, [g_e.sum() + g_p.sum()]])
        return loss, grad

    W_mu, W_ls, u, b = d._unpack()
    m = d.latent_dim
    eps_e = np.zeros((n_e, m)) if demo_noise is None else np.asarray(demo_noise)
    eps_p = np.zeros((n_p, m)) if policy_noise is None else np.asarray(policy_noise)

    def forward(phi, eps):
        mu = phi @ W_mu.T
        ls = phi @ W_ls.T
        sig = np.exp(ls)
        z = mu + sig * eps
        return mu, ls, sig, z, z @ u + b

    mu_e, ls_e, sig_e, z_e, x_e = forward(phi_e, eps_e)
    mu_p, ls_p, sig_p, z_p, x_p = forward(phi_p, eps_p)
    kl_e = 0.5 * np.sum(mu_e**2 + sig_e**2 - 1.0 - 2.0 * ls_e, axis=1)
    kl_p = 0.5 * np.sum(mu_p**2 + sig_p**2 - 1.0 - 2.0 * ls_p, axis=1)
    kl = 0.5 * (kl_e.mean() + kl_p.mean())
    loss = float(np.mean(_softplus(-x_e)) + np.mean(_softplus(x_p)) + d.beta * (kl - d.info_constraint))

    g_e = (_sigmoid(x_e) - 1.0) / n_e
    g_p = _sigmoid(x_p) / n_p
    g_u = z_e.T @ g_e + z_p.T @ g_p
    g_b = g_e.sum() + g_p.sum()
    # adversarial part through z = mu + sig * eps
    dmu_e, dmu_p = np.outer(g_e, u), np.outer(g_p, u)
    dls_e, dls_p = dmu_e * sig_e * eps_e, dmu_p * sig_p * eps_p
    # KL part, weight beta / 2 per batch mean
    ce, cp = 0.5 * d.beta / n_e, 0.5 * d.beta / n_p
    dmu_e = dmu_e + ce * mu_e
    dmu_p = dmu_p + cp * mu_p
    dls_e = dls_e + ce * (sig_e**2 - 1.0)
    dls_p = dls_p + cp * (sig_p**2 - 1.0)
    g_Wmu = dmu_e.T @ phi_e + dmu_p.T @ phi_p
    g_Wls = dls_e.T @ phi_e + dls_p.T @ phi_p
    grad = np.concatenate([g_Wmu.ravel(), g_Wls.ravel(), g_u, [g_b]])
    return loss, grad


def train_discriminator(disc: Discriminator, demo_batch, policy_batch, steps=10, step_size=0.5, rng=None) -> Discriminator:
    """Plain gradient descent on ``discriminator_loss``; bottleneck noise drawn from ``rng``."""
    params = disc.params.copy()
    n_e, n_p = len(np.atleast_1d(demo_batch[0])), len(np.atleast_1d(policy_batch[0]))
    for _ in range(steps):
        if disc.bottleneck:
            if rng is None:
                raise ValueError("the bottleneck needs an rng for reparameterization noise")
            ne = rng.standard_normal((n_e, disc.latent_dim))
            npol = rng.standard_normal((n_p, disc.latent_dim))
        else:
            ne = npol = None
        _, grad = discriminator_loss(disc, demo_batch, policy_batch, ne, npol, params=params)
        params = params - step_size * grad
    return disc.with_params(params)


def discriminator_reward(disc: Discriminator, s, a):
    """``-log(1 - D)`` at the encoder mean (bottleneck) or at ``phi(s, a)``."""
    out = _softplus(disc.logits(s, a))
    return float(out) if np.ndim(out) == 0 else out

