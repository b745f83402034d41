"""Curiosity signals learned from demonstrations.

States are one-hot encoded, so the squared Euclidean distance between two
encoded states is 0 when they agree and 2 otherwise. Two backends exist:

* ``TransitionModel``: smoothed counts of demo transitions.
* ``GenerativeRewardModel``: a tabular conditional VAE with a categorical
  latent the size of the action set; the encoder infers a latent "action"
  from ``(s, s')`` and the decoder predicts ``s'`` from ``(latent, s)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kvformat
from .mdp import DemoSet, EpisodicMdp, StochasticPolicy, empirical_policy, occupancy_measure
from .rng import derive_rng


@dataclass(frozen=True, eq=False)
class TransitionModel:
    kernel: np.ndarray  # (S, A, S) or per step (H, S, A, S)
    visit_counts: np.ndarray  # (S, A) or (H, S, A)
    smoothing: float

    @property
    def per_step(self) -> bool:
        return self.kernel.ndim == 4

    def kernel_at(self, h) -> np.ndarray:
        return self.kernel[h] if self.per_step else self.kernel

    def to_kv(self) -> dict:
        data = {"format": "ilde-transition-model", "version": 1, "smoothing": float(self.smoothing)}
        kvformat.put_array(data, "kernel", self.kernel)
        kvformat.put_array(data, "visit_counts", self.visit_counts)
        return data

    @classmethod
    def from_kv(cls, data: dict) -> TransitionModel:
        if data.get("format") != "ilde-transition-model":
            raise kvformat.KvFormatError("not an ilde-transition-model document")
        return cls(kvformat.get_array(data, "kernel"), kvformat.get_array(data, "visit_counts"), data["smoothing"])


def fit_demo_model(demos: DemoSet, num_states, num_actions, smoothing=0.1, per_step=False, horizon=None) -> TransitionModel:
    """``P_hat(s'|s,a) = (n(s,a,s') + c) / (n(s,a) + c S)``; uniform where unvisited."""
    if smoothing < 0:
        raise ValueError("smoothing must be nonnegative")
    S, A = num_states, num_actions
    t = demos.trajectories
    if per_step:
        H = horizon if horizon is not None else t.length
        counts = np.zeros((H, S, A, S))
        steps = np.broadcast_to(np.arange(t.length), t.states.shape)
        np.add.at(counts, (steps.ravel(), t.states.ravel(), t.actions.ravel(), t.next_states.ravel()), 1.0)
    else:
        counts = np.zeros((S, A, S))
        np.add.at(counts, (t.states.ravel(), t.actions.ravel(), t.next_states.ravel()), 1.0)
    visits = counts.sum(axis=-1)
    num = counts + smoothing
    den = visits[..., None] + smoothing * S
    kernel = np.where(den > 0, num / np.where(den > 0, den, 1.0), 1.0 / S)
    return TransitionModel(kernel, visits, float(smoothing))


def intrinsic_table(model: TransitionModel, mdp: EpisodicMdp) -> np.ndarray:
    """Exact ``L_h(s, a) = 2 (1 - <P_hat(.|s,a), P_h(.|s,a)>)`` with shape ``(H, S, A)``."""
    H = mdp.horizon
    out = np.empty((H, mdp.num_states, mdp.num_actions))
    for h in range(H):
        overlap = np.einsum("sat,sat->sa", model.kernel_at(h), mdp.transitions[h])
        out[h] = 2.0 * (1.0 - overlap)
    return np.clip(out, 0.0, 2.0)


def intrinsic_reward(model: TransitionModel, mdp: EpisodicMdp, s, a, h, mode="exact", rng=None) -> float:
    """Curiosity at ``(s, a)`` on step ``h``.

    ``mode="exact"`` averages over both the model and the true kernel;
    ``mode="sampled"`` draws one predicted and one true next state and returns
    the realized squared distance (0 or 2), an unbiased estimate of the former.
    """
    p_hat = model.kernel_at(h)[s, a]
    p_true = mdp.transitions[h, s, a]
    if mode == "exact":
        return float(min(2.0, max(0.0, 2.0 * (1.0 - p_hat @ p_true))))
    if mode == "sampled":
        if rng is None:
            raise ValueError("sampled mode needs an rng")
        s_hat = rng.choice(len(p_hat), p=p_hat)
        s_next = rng.choice(len(p_true), p=p_true)
        return 0.0 if s_hat == s_next else 2.0
    raise ValueError(f"unknown mode {mode!r}")


def transition_intrinsic(model: TransitionModel, states, actions, next_states, steps=None) -> np.ndarray:
    """Curiosity for observed transitions, averaging only over the model:
    ``2 (1 - P_hat(s'|s,a))``. Needs no access to the true kernel."""
    states, actions, next_states = (np.asarray(x) for x in (states, actions, next_states))
    if model.per_step:
        steps = np.broadcast_to(np.asarray(steps), states.shape)
        p = model.kernel[steps, states, actions, next_states]
    else:
        p = model.kernel[states, actions, next_states]
    return 2.0 * (1.0 - p)


def expected_intrinsic(mdp: EpisodicMdp, policy: StochasticPolicy, model: TransitionModel) -> float:
    """``Int(pi) = sum_h <d_h^pi, L_h>``."""
    return float(np.sum(occupancy_measure(mdp, policy) * intrinsic_table(model, mdp)))


def _log_softmax(x, axis=-1):
    m = x.max(axis=axis, keepdims=True)
    z = x - m
    return z - np.log(np.exp(z).sum(axis=axis, keepdims=True))


@dataclass(eq=False)
class GenerativeRewardModel:
    encoder_logits: np.ndarray  # (S, S, A): q(z | s, s')
    decoder_logits: np.ndarray  # (A, S, S): p(s' | z, s)
    expert_policy: np.ndarray  # (S, A): empirical pi_E(a | s), strictly positive
    alpha: float = 1.0
    history: list = field(default_factory=list)

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be nonnegative")

    @property
    def num_states(self):
        return self.decoder_logits.shape[1]

    @property
    def num_actions(self):
        return self.decoder_logits.shape[0]

    def encoder(self) -> np.ndarray:
        return np.exp(_log_softmax(self.encoder_logits))

    def decoder(self) -> np.ndarray:
        return np.exp(_log_softmax(self.decoder_logits))

    def params(self) -> np.ndarray:
        return np.concatenate([self.encoder_logits.ravel(), self.decoder_logits.ravel()])

    def with_params(self, flat) -> GenerativeRewardModel:
        n = self.encoder_logits.size
        return GenerativeRewardModel(
            flat[:n].reshape(self.encoder_logits.shape).copy(),
            flat[n:].reshape(self.decoder_logits.shape).copy(),
            self.expert_policy,
            self.alpha,
        )

    def to_kv(self) -> dict:
        data = {"format": "ilde-generative-model", "version": 1, "alpha": float(self.alpha)}
        kvformat.put_array(data, "encoder_logits", self.encoder_logits)
        kvformat.put_array(data, "decoder_logits", self.decoder_logits)
        kvformat.put_array(data, "expert_policy", self.expert_policy)
        return data

    @classmethod
    def from_kv(cls, data: dict) -> GenerativeRewardModel:
        if data.get("format") != "ilde-generative-model":
            raise kvformat.KvFormatError("not an ilde-generative-model document")
        return cls(
            kvformat.get_array(data, "encoder_logits"),
            kvformat.get_array(data, "decoder_logits"),
            kvformat.get_array(data, "expert_policy"),
            data["alpha"],
        )


def generative_objective(model: GenerativeRewardModel, states, next_states, with_grad=True):
    """Mean over transitions of

        E_q[log p(s'|z,s)] - KL(q(z|s,s') || uniform) - alpha KL(q(z|s,s') || pi_E(.|s))

    Returns ``(value, reconstruction, grad)``; ``grad`` is the flat gradient with
    respect to ``model.params()`` (``None`` when ``with_grad`` is false).
    """
    s = np.asarray(states).ravel()
    s2 = np.asarray(next_states).ravel()
    n = len(s)
    A = model.num_actions
    alpha = model.alpha
    log_q = _log_softmax(model.encoder_logits[s, s2])  # (n, A)
    q = np.exp(log_q)
    log_dec = _log_softmax(model.decoder_logits)  # (A, S, S)
    log_p = log_dec[:, s, s2].T  # (n, A): log p(s'_i | z, s_i)
    log_pi = np.log(model.expert_policy[s])  # (n, A)
    recon = np.sum(q * log_p, axis=1)
    neg_ent = np.sum(q * log_q, axis=1)
    value_i = recon - (neg_ent + math.log(A)) - alpha * (neg_ent - np.sum(q * log_pi, axis=1))
    value = float(value_i.mean())
    recon_mean = float(recon.mean())
    if not with_grad:
        return value, recon_mean, None

    # d/du_j of sum_z q_z g_z - (1+alpha) sum q log q, with q = softmax(u)
    score = log_p + alpha * log_pi - (1.0 + alpha) * log_q
    centered = score - np.sum(q * score, axis=1, keepdims=True)
    g_enc_rows = q * centered / n
    g_enc = np.zeros_like(model.encoder_logits)
    np.add.at(g_enc, (s, s2), g_enc_rows)

    # d/dv[z, s, k] of q(z) log p(s'|z,s) = q(z) (1[k = s'] - p_k)
    dec = np.exp(log_dec)
    g_dec = np.zeros_like(model.decoder_logits)
    for z in range(A):
        w = q[:, z] / n
        np.add.at(g_dec[z], (s, s2), w)
        np.add.at(g_dec[z], s, -w[:, None] * dec[z, s])
    return value, recon_mean, np.concatenate([g_enc.ravel(), g_dec.ravel()])


def train_generative_model(
    demos: DemoSet,
    num_states,
    num_actions,
    alpha=1.0,
    epochs=2000,
    step_size=0.05,
    rng_seed=0,
    init_scale=0.1,
    policy_smoothing=0.01,
) -> GenerativeRewardModel:
    """Full-batch gradient ascent on ``generative_objective`` over the demo transitions.

    Logits start at small seeded noise so the latent symmetry is broken.
    ``history`` on the returned model holds the objective before each epoch
    and after the last one.
    """
    if step_size <= 0:
        raise ValueError("step_size must be positive")
    S, A = num_states, num_actions
    t = demos.trajectories
    s, s2 = t.states.ravel(), t.next_states.ravel()
    rng = derive_rng(rng_seed, "generative-init")
    model = GenerativeRewardModel(
        init_scale * rng.standard_normal((S, S, A)),
        init_scale * rng.standard_normal((A, S, S)),
        empirical_policy(demos, S, A, smoothing=policy_smoothing),
        alpha,
    )
    theta = model.params()
    history = []
    for _ in range(epochs):
        value, _, grad = generative_objective(model, s, s2)
        history.append(value)
        theta = theta + step_size * grad
        model = model.with_params(theta)
    history.append(generative_objective(model, s, s2, with_grad=False)[0])
    model.history = history
    return model


def generative_reward(model: GenerativeRewardModel, s, a, s_next):
    """Soft reconstruction error ``||p(.|a, s) - e(s')||^2`` in [0, 2]; vectorized."""
    s, a, s_next = (np.asarray(x) for x in (s, a, s_next))
    pred = model.decoder()[a, s]  # (..., S)
    sq = np.sum(pred * pred, axis=-1)
    hit = np.take_along_axis(pred, s_next[..., None], axis=-1)[..., 0]
    out = np.clip(sq - 2.0 * hit + 1.0, 0.0, 2.0)
    return float(out) if out.ndim == 0 else out
