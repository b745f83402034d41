"""Practical ILDE: discriminator imitation reward, demo-trained curiosity,
batch-relative state-entropy bonus and clipped-surrogate policy optimization
on a tabular softmax policy with a tabular critic."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .curiosity import GenerativeRewardModel, TransitionModel, fit_demo_model, generative_reward, train_generative_model, transition_intrinsic
from .entropy import DEFAULT_K, RepresentationBatch, state_entropy_bonuses
from .function_class import FeatureMap
from .imitation import Discriminator, discriminator_reward, train_discriminator
from .mdp import DemoSet, EpisodicMdp, StochasticPolicy, expected_return, rollout
from .rng import derive_rng

VARIANTS = ("full", "no_bonus", "no_imitation", "no_curiosity")
CURIOSITY_BACKENDS = ("generative", "count")


def _log_softmax(x):
    z = x - x.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


@dataclass(frozen=True, eq=False)
class SoftmaxPolicyParams:
    logits: np.ndarray  # (H, S, A)

    def __post_init__(self):
        lg = np.array(self.logits, dtype=float)
        if lg.ndim != 3:
            raise ValueError("logits must have shape (H, S, A)")
        if not np.all(np.isfinite(lg)):
            raise ValueError("logits must be finite")
        object.__setattr__(self, "logits", lg)

    @classmethod
    def uniform(cls, horizon, num_states, num_actions) -> SoftmaxPolicyParams:
        return cls(np.zeros((horizon, num_states, num_actions)))

    def log_probs(self) -> np.ndarray:
        return _log_softmax(self.logits)

    def policy(self) -> StochasticPolicy:
        return StochasticPolicy(np.exp(self.log_probs()))


@dataclass(frozen=True)
class PracticalConfig:
    T: int = 200
    lam: float = 10.0
    discount: float = 0.99
    gae_lambda: float = 0.95
    clip_eps: float = 0.1
    entropy_coef: float = 0.01
    epochs: int = 4
    batch_size: int = 16  # trajectories per iteration
    minibatch_size: int = 32  # transitions per gradient step
    k: int = DEFAULT_K
    curiosity: str = "generative"
    policy_lr: float = 0.5
    critic_lr: float = 0.5
    disc_steps: int = 10
    disc_lr: float = 0.5
    bottleneck: bool = False
    eval_every: int = 1
    rng_seed: int = 0

    def __post_init__(self):
        if self.T < 0:
            raise ValueError("T must be nonnegative")
        for name in ("epochs", "batch_size", "minibatch_size", "k", "eval_every"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        for name in ("policy_lr", "critic_lr", "disc_lr"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.lam < 0 or self.entropy_coef < 0 or self.disc_steps < 0:
            raise ValueError("lam, entropy_coef and disc_steps must be nonnegative")
        if not 0 < self.clip_eps < 1:
            raise ValueError("clip_eps must lie in (0, 1)")
        if not 0 <= self.discount <= 1 or not 0 <= self.gae_lambda <= 1:
            raise ValueError("discount and gae_lambda must lie in [0, 1]")
        if self.curiosity not in CURIOSITY_BACKENDS:
            raise ValueError(f"curiosity must be one of {CURIOSITY_BACKENDS}")


def curiosity_reward(model, states, actions, next_states, steps=None):
    """Per-transition curiosity from either backend."""
    if isinstance(model, GenerativeRewardModel):
        return generative_reward(model, states, actions, next_states)
    if isinstance(model, TransitionModel):
        return transition_intrinsic(model, states, actions, next_states, steps)
    raise TypeError(f"unsupported curiosity model {type(model).__name__}")


def aggregate_reward(disc: Discriminator, curiosity, entropy_batch: RepresentationBatch, transition, lam, index) -> float:
    """``r(s, a) + lam * curiosity(s, a, s') + b(s)`` for one transition, where
    ``b`` is the k-NN bonus of point ``index`` of ``entropy_batch``."""
    s, a, s_next, h = transition
    total = float(discriminator_reward(disc, s, a))
    if lam != 0:
        total += lam * float(curiosity_reward(curiosity, s, a, s_next, h))
    return total + float(state_entropy_bonuses(entropy_batch)[index])


@dataclass(frozen=True)
class RewardParts:
    disc: np.ndarray
    curiosity: np.ndarray
    bonus: np.ndarray
    total: np.ndarray


def aggregate_rewards(batch, disc, curiosity, lam, k, num_states, variant="full") -> RewardParts:
    """Vectorized per-step rewards of a trajectory batch with the variant's terms;
    components that the variant drops are zero arrays."""
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}")
    shape = batch.states.shape
    steps = np.broadcast_to(np.arange(shape[1]), shape)
    zeros = np.zeros(shape)
    r_d = discriminator_reward(disc, batch.states, batch.actions) if variant != "no_imitation" else zeros
    r_c = zeros
    if variant != "no_curiosity" and lam != 0:
        r_c = np.asarray(curiosity_reward(curiosity, batch.states, batch.actions, batch.next_states, steps), dtype=float)
    r_b = zeros
    if variant != "no_bonus":
        rep = RepresentationBatch.one_hot(batch.states, num_states, k)
        r_b = state_entropy_bonuses(rep).reshape(shape)
    r_d = np.asarray(r_d, dtype=float).reshape(shape)
    return RewardParts(r_d, r_c, r_b, r_d + lam * r_c + r_b)


def gae_advantages(rewards, values, discount, gae_lambda) -> np.ndarray:
    """GAE over ``(n, L)`` rewards with ``(n, L + 1)`` value estimates (terminal 0)."""
    rewards = np.atleast_2d(np.asarray(rewards, dtype=float))
    values = np.atleast_2d(np.asarray(values, dtype=float))
    if values.shape != (rewards.shape[0], rewards.shape[1] + 1):
        raise ValueError("values need one more column than rewards")
    return kernels.gae(rewards, values, discount, gae_lambda)


@dataclass(frozen=True)
class PpoBatch:
    steps: np.ndarray
    states: np.ndarray
    actions: np.ndarray
    advantages: np.ndarray
    old_log_probs: np.ndarray
    returns: np.ndarray

    def __len__(self):
        return len(self.states)

    def subset(self, idx) -> PpoBatch:
        return PpoBatch(*(x[idx] for x in (self.steps, self.states, self.actions, self.advantages, self.old_log_probs, self.returns)))


def surrogate(logits, batch: PpoBatch, clip_eps, entropy_coef, with_grad=False):
    """Mean of ``min(rho A, clip(rho) A) + c * entropy``; returns
    ``(objective, clipped_surrogate, grad)`` with ``grad`` shaped like ``logits``."""
    h, s, a = batch.steps, batch.states, batch.actions
    log_pi = _log_softmax(logits[h, s])  # (n, A)
    pi = np.exp(log_pi)
    ratio = np.exp(log_pi[np.arange(len(a)), a] - batch.old_log_probs)
    adv = batch.advantages
    unclipped = ratio * adv
    clipped = np.clip(ratio, 1 - clip_eps, 1 + clip_eps) * adv
    surr = np.minimum(unclipped, clipped)
    ent = -np.sum(pi * log_pi, axis=1)
    n = len(a)
    value = float(np.mean(surr + entropy_coef * ent))
    surr_mean = float(np.mean(surr))
    if not with_grad:
        return value, surr_mean, None
    # the min picks the clipped branch (zero gradient) only when clipping is active
    active = ~(((adv > 0) & (ratio > 1 + clip_eps)) | ((adv < 0) & (ratio < 1 - clip_eps)))
    onehot = np.zeros_like(pi)
    onehot[np.arange(n), a] = 1.0
    g_rows = (active * ratio * adv)[:, None] * (onehot - pi)
    g_rows -= entropy_coef * pi * (log_pi + ent[:, None])
    grad = np.zeros_like(logits)
    np.add.at(grad, (h, s), g_rows / n)
    return value, surr_mean, grad


@dataclass
class PpoReport:
    surrogate_per_epoch: list = field(default_factory=list)  # full-batch clipped surrogate, before and after each epoch
    max_ratio_per_epoch: list = field(default_factory=list)
    backtracks: int = 0


def ppo_update(params: SoftmaxPolicyParams, batch: PpoBatch, config: PracticalConfig, rng, critic=None, max_backtracks=8):
    """``config.epochs`` passes of minibatch ascent on the clipped surrogate plus
    entropy, with the tabular critic regressed on ``batch.returns`` alongside.

    An epoch that lowers the full-batch clipped surrogate is undone and retried
    at half the step size. Returns ``(params, critic, report)``.
    """
    logits = params.logits.copy()
    critic = None if critic is None else np.array(critic, dtype=float)
    report = PpoReport()
    n = len(batch)
    if n == 0:
        return SoftmaxPolicyParams(logits), critic, report
    current = surrogate(logits, batch, config.clip_eps, config.entropy_coef)[1]
    report.surrogate_per_epoch.append(current)
    lr = config.policy_lr
    for _ in range(config.epochs):
        order = rng.permutation(n)
        for attempt in range(max_backtracks + 1):
            trial = logits.copy()
            for lo in range(0, n, config.minibatch_size):
                mb = batch.subset(order[lo : lo + config.minibatch_size])
                _, _, grad = surrogate(trial, mb, config.clip_eps, config.entropy_coef, with_grad=True)
                if not np.all(np.isfinite(grad)):
                    raise FloatingPointError("non-finite policy gradient")
                trial += lr * grad
            value = surrogate(trial, batch, config.clip_eps, config.entropy_coef)[1]
            if value >= current - 1e-12:
                logits, current = trial, value
                break
            report.backtracks += 1
            lr *= 0.5
        report.surrogate_per_epoch.append(current)
        log_pi = _log_softmax(logits[batch.steps, batch.states])[np.arange(n), batch.actions]
        report.max_ratio_per_epoch.append(float(np.max(np.exp(log_pi - batch.old_log_probs))))
        if critic is not None:
            for lo in range(0, n, config.minibatch_size):
                mb = batch.subset(order[lo : lo + config.minibatch_size])
                err = np.zeros_like(critic)
                cnt = np.zeros_like(critic)
                np.add.at(err, (mb.steps, mb.states), mb.returns - critic[mb.steps, mb.states])
                np.add.at(cnt, (mb.steps, mb.states), 1.0)
                critic += config.critic_lr * err / np.maximum(cnt, 1.0)
    return SoftmaxPolicyParams(logits), critic, report


def params_digest(params: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(params, dtype=np.float64).tobytes()).hexdigest()[:16]


@dataclass
class PracticalRecord:
    evaluation_step: int
    j_true: float
    mean_disc_reward: float
    mean_curiosity: float
    mean_bonus: float
    variant: str
    disc_updated_hash: str = ""
    disc_reward_hash: str = ""
    backtracks: int = 0


@dataclass
class PracticalTrace:
    variant: str
    records: list = field(default_factory=list)

    def rows(self):
        return [
            {
                "evaluation_step": r.evaluation_step,
                "J_true": r.j_true,
                "mean_disc_reward": r.mean_disc_reward,
                "mean_curiosity": r.mean_curiosity,
                "mean_bonus": r.mean_bonus,
                "variant": r.variant,
            }
            for r in self.records
        ]


def pretrain_curiosity(demos: DemoSet, num_states, num_actions, backend="generative", rng_seed=0):
    if backend == "generative":
        return train_generative_model(demos, num_states, num_actions, rng_seed=rng_seed)
    if backend == "count":
        return fit_demo_model(demos, num_states, num_actions)
    raise ValueError(f"curiosity must be one of {CURIOSITY_BACKENDS}")


def run_ilde_practical(mdp: EpisodicMdp, demos: DemoSet, config: PracticalConfig, variant="full", curiosity_model=None, feature_map=None):
    """Run the practical loop for ``config.T`` iterations; returns ``(policy, trace)``.

    Per iteration: sample a batch from the current policy, update the
    discriminator on demos against that batch, score the batch with the
    variant's reward terms and take a PPO step. ``J`` under the true reward is
    recorded every ``eval_every`` iterations (and at step 0).
    """
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}")
    H, S, A = mdp.horizon, mdp.num_states, mdp.num_actions
    if curiosity_model is None:
        curiosity_model = pretrain_curiosity(demos, S, A, config.curiosity, config.rng_seed)
    fm = feature_map if feature_map is not None else FeatureMap.one_hot(S, A)
    disc = Discriminator.create(fm, bottleneck=config.bottleneck, rng_seed=config.rng_seed)
    disc_rng = derive_rng(config.rng_seed, "practical-disc")
    ppo_rng = derive_rng(config.rng_seed, "practical-ppo")
    demo_t = demos.trajectories
    demo_sa = (demo_t.states.ravel(), demo_t.actions.ravel())

    params = SoftmaxPolicyParams.uniform(H, S, A)
    critic = np.zeros((H, S))
    trace = PracticalTrace(variant)
    trace.records.append(PracticalRecord(0, expected_return(mdp, params.policy(), mdp.true_reward), 0.0, 0.0, 0.0, variant))
    for t in range(1, config.T + 1):
        policy = params.policy()
        batch = rollout(mdp, policy, config.rng_seed, config.batch_size, tag=f"practical-batch-{t}")
        updated_hash = ""
        if variant != "no_imitation":
            disc = train_discriminator(disc, demo_sa, (batch.states.ravel(), batch.actions.ravel()),
                                       steps=config.disc_steps, step_size=config.disc_lr, rng=disc_rng)
            updated_hash = params_digest(disc.params)
        parts = aggregate_rewards(batch, disc, curiosity_model, config.lam, config.k, S, variant)
        reward_hash = params_digest(disc.params) if variant != "no_imitation" else ""

        n, L = batch.states.shape
        steps = np.broadcast_to(np.arange(L), (n, L))
        values = np.zeros((n, L + 1))
        values[:, :L] = critic[steps, batch.states]
        adv = gae_advantages(parts.total, values, config.discount, config.gae_lambda)
        log_pi = params.log_probs()
        ppo_batch = PpoBatch(
            steps.ravel().copy(),
            batch.states.ravel(),
            batch.actions.ravel(),
            adv.ravel(),
            log_pi[steps, batch.states, batch.actions].ravel(),
            (adv + values[:, :L]).ravel(),
        )
        params, critic, report = ppo_update(params, ppo_batch, config, ppo_rng, critic)
        if t % config.eval_every == 0 or t == config.T:
            trace.records.append(PracticalRecord(
                evaluation_step=t,
                j_true=expected_return(mdp, params.policy(), mdp.true_reward),
                mean_disc_reward=float(parts.disc.mean()),
                mean_curiosity=float(parts.curiosity.mean()),
                mean_bonus=float(parts.bonus.mean()),
                variant=variant,
                disc_updated_hash=updated_hash,
                disc_reward_hash=reward_hash,
                backtracks=report.backtracks,
            ))
    return params.policy(), trace
