"""Imitation learning with double exploration, natural-policy-gradient form.

Each iteration updates a linear reward by projected gradient steps on the
empirical imitation gap, evaluates the current policy optimistically
(least-squares backups plus an uncertainty bonus plus the curiosity term)
and takes a multiplicative-weights policy step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .curiosity import TransitionModel, intrinsic_table
from .function_class import BonusConfig, FeatureMap, LinearFunctionClass, UncertaintyAccumulator, least_squares_fit
from .imitation import LinearRewardClass, RewardParams, empirical_loss_hat, pgd_reward_step
from .mdp import DemoSet, EpisodicMdp, StochasticPolicy, TrajectoryBatch, expected_return, rollout
from .rng import derive_rng


@dataclass(frozen=True)
class OpeResult:
    q: np.ndarray  # (H, S, A)
    v: np.ndarray  # (H + 1, S)
    bonus: np.ndarray  # (H, S, A)


def ope(policy: StochasticPolicy, data: TrajectoryBatch, reward, cls: LinearFunctionClass, bonus: BonusConfig,
        intrinsic=None, lam=0.0) -> OpeResult:
    """Optimistic policy evaluation.

    The trajectories are split into ``H`` contiguous blocks; block ``h`` feeds
    the regression and the bonus at step ``h``. ``reward`` is an ``(S, A)`` or
    ``(H, S, A)`` table and ``intrinsic`` an ``(H, S, A)`` curiosity table.
    """
    H, S, A = policy.shape
    N = len(data)
    if N < H:
        raise ValueError(f"need at least H={H} trajectories to split, got {N}")
    if data.length < H:
        raise ValueError("evaluation data must hold full-length trajectories")
    r = np.broadcast_to(np.asarray(reward, dtype=float), (H, S, A))
    if intrinsic is not None and lam != 0:
        r = r + lam * np.asarray(intrinsic)
    coef = bonus.coefficient(cls, H, N)
    blocks = np.array_split(np.arange(N), H)
    Q = np.zeros((H, S, A))
    V = np.zeros((H + 1, S))
    B = np.zeros((H, S, A))
    for h in range(H - 1, -1, -1):
        idx = blocks[h]
        s, a, s2 = data.states[idx, h], data.actions[idx, h], data.next_states[idx, h]
        if h == H - 1 or not np.any(V[h + 1]):
            f_hat = np.zeros((S, A))
        else:
            w = least_squares_fit(cls, s, a, V[h + 1][s2], bonus.lambda_ed)
            f_hat = cls.table(w)
        if coef > 0:
            acc = UncertaintyAccumulator(cls, bonus.lambda_ed)
            acc.add(s, a)
            B[h] = coef * acc.uncertainty_table()
        Q[h] = np.clip(f_hat + r[h] + B[h], -H, H)
        V[h] = np.sum(policy.probs[h] * Q[h], axis=1)
    return OpeResult(Q, V, B)


def mirror_descent_step(policy: StochasticPolicy, q, eta) -> StochasticPolicy:
    """``pi'(.|s) ∝ pi(.|s) exp(eta Q(s, .))`` per step and state."""
    if eta <= 0:
        raise ValueError("eta must be positive")
    q = np.asarray(q, dtype=float)
    if not np.all(np.isfinite(q)):
        raise ValueError("Q must be finite")
    with np.errstate(divide="ignore"):
        logits = np.log(policy.probs) + eta * q
    logits -= logits.max(axis=-1, keepdims=True)
    p = np.exp(logits)
    return StochasticPolicy(p / p.sum(axis=-1, keepdims=True))


@dataclass(frozen=True)
class NpgConfig:
    K: int = 200
    m: int = 1
    N: int = 50
    eta: float | None = None
    eta_theta: float | None = None
    lam: float = 0.0
    bonus: BonusConfig = field(default_factory=BonusConfig)
    ratio_clip: float = 10.0
    reward_radius: float = 1.0
    rng_seed: int = 0

    def __post_init__(self):
        if min(self.K, self.m, self.N) < 1:
            raise ValueError("K, m and N must be positive")
        if self.eta is not None and self.eta <= 0:
            raise ValueError("eta must be positive")
        # eta_theta = 0 freezes the reward at its initial value
        if self.eta_theta is not None and self.eta_theta < 0:
            raise ValueError("eta_theta must be nonnegative")
        if self.lam < 0:
            raise ValueError("lam must be nonnegative")

    def policy_step(self, horizon, num_actions) -> float:
        """``eta = sqrt(log |A|) / (H sqrt(K))`` unless given."""
        if self.eta is not None:
            return self.eta
        return math.sqrt(math.log(num_actions)) / (horizon * math.sqrt(self.K))

    def reward_step(self, horizon) -> float:
        """``eta_theta = 1 / sqrt(H^2 K)`` unless given."""
        if self.eta_theta is not None:
            return self.eta_theta
        return 1.0 / math.sqrt(horizon * horizon * self.K)


@dataclass
class NpgRecord:
    iteration: int
    refreshed: bool
    k_prime: int
    policy: np.ndarray
    theta: np.ndarray
    loss_hat: float
    q: np.ndarray
    v1: np.ndarray
    mean_bonus: float
    max_bonus: float


@dataclass
class NpgTrace:
    records: list = field(default_factory=list)
    output_index: int = 0

    def __len__(self):
        return len(self.records)

    def policies(self):
        return [StochasticPolicy(r.policy) for r in self.records]


def run_ilde_npg(mdp: EpisodicMdp, demos: DemoSet, config: NpgConfig, cls: LinearFunctionClass | None = None,
                 reward_init: RewardParams | None = None, curiosity_model: TransitionModel | None = None):
    """Run the phasic loop for ``K`` iterations; returns ``(output policy, trace)``.

    Fresh data is drawn when ``k mod m == 1`` (every iteration when ``m == 1``)
    from a policy chosen uniformly among the last ``m`` iterates. On other
    iterations the previous dataset and reward are carried over, and the reward
    still takes its projected gradient step. The output is an iterate chosen
    uniformly at random.
    """
    H, S, A = mdp.horizon, mdp.num_states, mdp.num_actions
    if cls is None:
        cls = LinearFunctionClass.tabular(S, A, H)
    if reward_init is None:
        reward_init = RewardParams.zeros(LinearRewardClass(FeatureMap.one_hot(S, A), config.reward_radius))
    intrinsic = None
    if curiosity_model is not None and config.lam > 0:
        intrinsic = intrinsic_table(curiosity_model, mdp)
    eta = config.policy_step(H, A)
    eta_theta = config.reward_step(H)
    pick = derive_rng(config.rng_seed, "npg-kprime")

    policy = StochasticPolicy.uniform(H, S, A)
    iterates = [policy]
    reward = reward_init
    data = None
    batch_policy = None
    k_prime = 0
    trace = NpgTrace()
    for k in range(1, config.K + 1):
        refresh = config.m == 1 or k % config.m == 1 or data is None
        if refresh:
            lo = max(1, k - config.m + 1)
            k_prime = int(pick.integers(lo, k + 1))
            batch_policy = iterates[k_prime - 1]
            data = rollout(mdp, batch_policy, config.rng_seed, config.N, tag=f"npg-data-{k}")
        loss_hat, grad = empirical_loss_hat(demos, data, batch_policy, policy, reward, config.ratio_clip, with_grad=True)
        # descend on -L_hat
        if eta_theta > 0:
            reward = pgd_reward_step(reward, -grad, eta_theta)
        res = ope(policy, data, reward.table(), cls, config.bonus, intrinsic, config.lam)
        trace.records.append(NpgRecord(
            iteration=k,
            refreshed=bool(refresh),
            k_prime=k_prime,
            policy=policy.probs,
            theta=reward.theta,
            loss_hat=loss_hat,
            q=res.q,
            v1=res.v[0],
            mean_bonus=float(res.bonus.mean()),
            max_bonus=float(res.bonus.max()),
        ))
        policy = mirror_descent_step(policy, res.q, eta)
        iterates.append(policy)
    trace.output_index = int(derive_rng(config.rng_seed, "npg-output").integers(0, config.K))
    return StochasticPolicy(trace.records[trace.output_index].policy), trace


def trace_rows(trace: NpgTrace, mdp: EpisodicMdp, regret_increments=None):
    """Rows for the per-iteration CSV."""
    rows = []
    for i, rec in enumerate(trace.records):
        rows.append({
            "iteration": rec.iteration,
            "refresh_flag": int(rec.refreshed),
            "k_prime": rec.k_prime,
            "L_hat": rec.loss_hat,
            "mean_bonus": rec.mean_bonus,
            "J_true": expected_return(mdp, StochasticPolicy(rec.policy), mdp.true_reward),
            "regret_increment": "" if regret_increments is None else float(regret_increments[i]),
        })
    return rows
