"""Finite episodic MDPs: exact dynamic programming, sampling and demonstrations.

Array conventions used throughout the package:

* transitions ``P[h, s, a, s']`` with shape ``(H, S, A, S)``
* policies ``pi[h, s, a]`` with shape ``(H, S, A)``
* rewards either ``r[s, a]`` (step-stationary) or ``r[h, s, a]``
* values ``V[h, s]`` with shape ``(H + 1, S)`` where ``V[H] = 0``
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import kernels, kvformat
from .rng import derive_rng

ROW_TOL = 1e-12
# trajectories per independent RNG block; fixed so results do not depend on `workers`
ROLLOUT_BLOCK = 4096


def _check_simplex(arr, what, tol=ROW_TOL):
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{what} contains non-finite entries")
    if np.any(arr < 0):
        raise ValueError(f"{what} has negative entries")
    err = np.max(np.abs(arr.sum(axis=-1) - 1.0))
    if err > tol:
        raise ValueError(f"{what} rows do not sum to one (max error {err:.3g})")


@dataclass(frozen=True, eq=False)
class EpisodicMdp:
    transitions: np.ndarray
    true_reward: np.ndarray
    initial_dist: np.ndarray
    name: str = "mdp"

    def __post_init__(self):
        P = np.ascontiguousarray(self.transitions, dtype=float)
        r = np.ascontiguousarray(self.true_reward, dtype=float)
        rho = np.ascontiguousarray(self.initial_dist, dtype=float)
        if P.ndim != 4 or P.shape[1] != P.shape[3]:
            raise ValueError(f"transitions must have shape (H, S, A, S), got {P.shape}")
        H, S, A, _ = P.shape
        if min(H, S, A) < 1:
            raise ValueError("horizon, states and actions must be positive")
        if r.shape != (S, A):
            raise ValueError(f"true_reward must have shape {(S, A)}, got {r.shape}")
        if rho.shape != (S,):
            raise ValueError(f"initial_dist must have shape {(S,)}, got {rho.shape}")
        _check_simplex(P, "transition kernel")
        _check_simplex(rho, "initial distribution")
        if not np.all(np.abs(r) <= 1.0):
            raise ValueError("true reward must lie in [-1, 1]")
        for arr in (P, r, rho):
            arr.flags.writeable = False
        object.__setattr__(self, "transitions", P)
        object.__setattr__(self, "true_reward", r)
        object.__setattr__(self, "initial_dist", rho)

    @property
    def horizon(self) -> int:
        return self.transitions.shape[0]

    @property
    def num_states(self) -> int:
        return self.transitions.shape[1]

    @property
    def num_actions(self) -> int:
        return self.transitions.shape[2]

    def to_kv(self) -> dict:
        data = {
            "format": "ilde-mdp",
            "version": 1,
            "name": self.name,
            "num_states": self.num_states,
            "num_actions": self.num_actions,
            "horizon": self.horizon,
        }
        kvformat.put_array(data, "transitions", self.transitions)
        kvformat.put_array(data, "true_reward", self.true_reward)
        kvformat.put_array(data, "initial_dist", self.initial_dist)
        return data

    @classmethod
    def from_kv(cls, data: dict) -> EpisodicMdp:
        if data.get("format") != "ilde-mdp":
            raise kvformat.KvFormatError("not an ilde-mdp document")
        mdp = cls(
            kvformat.get_array(data, "transitions"),
            kvformat.get_array(data, "true_reward"),
            kvformat.get_array(data, "initial_dist"),
            name=data.get("name", "mdp"),
        )
        dims = (data.get("horizon"), data.get("num_states"), data.get("num_actions"))
        if dims != (mdp.horizon, mdp.num_states, mdp.num_actions):
            raise kvformat.KvFormatError("declared dimensions disagree with the arrays")
        return mdp


@dataclass(frozen=True, eq=False)
class StochasticPolicy:
    probs: np.ndarray

    def __post_init__(self):
        p = np.ascontiguousarray(self.probs, dtype=float)
        if p.ndim != 3:
            raise ValueError(f"policy must have shape (H, S, A), got {p.shape}")
        _check_simplex(p, "policy")
        p.flags.writeable = False
        object.__setattr__(self, "probs", p)

    @classmethod
    def uniform(cls, horizon, num_states, num_actions) -> StochasticPolicy:
        return cls(np.full((horizon, num_states, num_actions), 1.0 / num_actions))

    @classmethod
    def from_logits(cls, logits) -> StochasticPolicy:
        z = np.asarray(logits, dtype=float)
        z = z - z.max(axis=-1, keepdims=True)
        e = np.exp(z)
        return cls(e / e.sum(axis=-1, keepdims=True))

    @classmethod
    def greedy(cls, q) -> StochasticPolicy:
        """Deterministic policy picking the first maximizer of ``q[h, s, :]``."""
        q = np.asarray(q)
        probs = np.zeros_like(q, dtype=float)
        np.put_along_axis(probs, q.argmax(axis=-1)[..., None], 1.0, axis=-1)
        return cls(probs)

    @property
    def shape(self):
        return self.probs.shape

    def epsilon_greedy(self, epsilon) -> StochasticPolicy:
        A = self.probs.shape[-1]
        return StochasticPolicy((1.0 - epsilon) * self.probs + epsilon / A)

    def to_kv(self) -> dict:
        data = {"format": "ilde-policy", "version": 1}
        kvformat.put_array(data, "probs", self.probs)
        return data

    @classmethod
    def from_kv(cls, data: dict) -> StochasticPolicy:
        if data.get("format") != "ilde-policy":
            raise kvformat.KvFormatError("not an ilde-policy document")
        return cls(kvformat.get_array(data, "probs"))


@dataclass(frozen=True)
class Trajectory:
    states: np.ndarray
    actions: np.ndarray
    next_states: np.ndarray

    def __len__(self):
        return len(self.states)

    def steps(self):
        return list(zip(self.states.tolist(), self.actions.tolist(), self.next_states.tolist()))


@dataclass(frozen=True, eq=False)
class TrajectoryBatch(Sequence):
    """``n`` trajectories of equal length stored as ``(n, L)`` index arrays."""

    states: np.ndarray
    actions: np.ndarray
    next_states: np.ndarray
    trembled: np.ndarray | None = None

    def __post_init__(self):
        shapes = {self.states.shape, self.actions.shape, self.next_states.shape}
        if len(shapes) != 1 or self.states.ndim != 2:
            raise ValueError("trajectory arrays must share one (n, L) shape")

    def __len__(self):
        return self.states.shape[0]

    def __getitem__(self, i):
        if isinstance(i, slice):
            return TrajectoryBatch(
                self.states[i],
                self.actions[i],
                self.next_states[i],
                None if self.trembled is None else self.trembled[i],
            )
        return Trajectory(self.states[i], self.actions[i], self.next_states[i])

    @property
    def length(self) -> int:
        return self.states.shape[1]

    def validate(self, mdp: EpisodicMdp) -> None:
        if self.length > mdp.horizon:
            raise ValueError("trajectory longer than the horizon")
        for arr, bound in ((self.states, mdp.num_states), (self.actions, mdp.num_actions), (self.next_states, mdp.num_states)):
            if arr.size and (arr.min() < 0 or arr.max() >= bound):
                raise ValueError("trajectory index out of range")


@dataclass(frozen=True, eq=False)
class DemoSet:
    trajectories: TrajectoryBatch
    truncation_fraction: float = 1.0
    tremble_prob: float = 0.0

    def __post_init__(self):
        if len(self.trajectories) < 1:
            raise ValueError("a demonstration set needs at least one trajectory")

    @property
    def n(self) -> int:
        return len(self.trajectories)

    def to_kv(self) -> dict:
        t = self.trajectories
        data = {
            "format": "ilde-demos",
            "version": 1,
            "truncation_fraction": float(self.truncation_fraction),
            "tremble_prob": float(self.tremble_prob),
        }
        kvformat.put_array(data, "states", t.states)
        kvformat.put_array(data, "actions", t.actions)
        kvformat.put_array(data, "next_states", t.next_states)
        if t.trembled is not None:
            kvformat.put_array(data, "trembled", t.trembled)
        return data

    @classmethod
    def from_kv(cls, data: dict) -> DemoSet:
        if data.get("format") != "ilde-demos":
            raise kvformat.KvFormatError("not an ilde-demos document")
        trembled = kvformat.get_array(data, "trembled", np.uint8) if "trembled" in data else None
        batch = TrajectoryBatch(
            kvformat.get_array(data, "states", np.int64),
            kvformat.get_array(data, "actions", np.int64),
            kvformat.get_array(data, "next_states", np.int64),
            trembled,
        )
        return cls(batch, data["truncation_fraction"], data["tremble_prob"])


def reward_table(reward, mdp: EpisodicMdp) -> np.ndarray:
    """Broadcast a reward map to shape ``(H, S, A)``."""
    r = np.asarray(reward, dtype=float)
    H, S, A = mdp.horizon, mdp.num_states, mdp.num_actions
    if r.shape == (S, A):
        return np.broadcast_to(r, (H, S, A))
    if r.shape == (H, S, A):
        return r
    raise ValueError(f"reward must have shape {(S, A)} or {(H, S, A)}, got {r.shape}")


def _check_policy(mdp, policy):
    if policy.probs.shape != (mdp.horizon, mdp.num_states, mdp.num_actions):
        raise ValueError(
            f"policy shape {policy.probs.shape} does not match mdp "
            f"{(mdp.horizon, mdp.num_states, mdp.num_actions)}"
        )


def exact_value(mdp: EpisodicMdp, policy: StochasticPolicy, reward):
    """Backward Bellman evaluation; returns ``(V, Q)`` with ``V[H] = 0``."""
    _check_policy(mdp, policy)
    r = reward_table(reward, mdp)
    if not np.all(np.isfinite(r)):
        raise ValueError("reward must be finite")
    H, S, A = policy.shape
    V = np.zeros((H + 1, S))
    Q = np.zeros((H, S, A))
    for h in range(H - 1, -1, -1):
        Q[h] = r[h] + mdp.transitions[h] @ V[h + 1]
        V[h] = np.einsum("sa,sa->s", Q[h], policy.probs[h])
    return V, Q


def expected_return(mdp: EpisodicMdp, policy: StochasticPolicy, reward) -> float:
    V, _ = exact_value(mdp, policy, reward)
    return float(mdp.initial_dist @ V[0])


def occupancy_measure(mdp: EpisodicMdp, policy: StochasticPolicy) -> np.ndarray:
    """Per-step state-action visitation distributions ``d[h, s, a]``."""
    _check_policy(mdp, policy)
    H, S, A = policy.shape
    d = np.empty((H, S, A))
    state_dist = mdp.initial_dist
    for h in range(H):
        d[h] = state_dist[:, None] * policy.probs[h]
        state_dist = np.einsum("sa,sat->t", d[h], mdp.transitions[h])
    return d


def optimal_policy(mdp: EpisodicMdp, reward):
    """Deterministic optimal policy by backward induction; returns ``(policy, V)``."""
    r = reward_table(reward, mdp)
    H, S, A = r.shape
    V = np.zeros((H + 1, S))
    Q = np.zeros((H, S, A))
    for h in range(H - 1, -1, -1):
        Q[h] = r[h] + mdp.transitions[h] @ V[h + 1]
        V[h] = Q[h].max(axis=1)
    return StochasticPolicy.greedy(Q), V


def _cumulative(p):
    c = np.cumsum(p, axis=-1)
    # exact 1.0 at the last positive entry so u in [0, 1) never selects a trailing zero
    return np.ascontiguousarray(c / c[..., -1:])


def _sample(mdp, policy, rng_seed, count, tag, tremble_prob=0.0, workers=1):
    _check_policy(mdp, policy)
    if count < 1:
        raise ValueError("count must be positive")
    H = mdp.horizon
    init_cum = _cumulative(mdp.initial_dist)
    trans_cum = _cumulative(mdp.transitions)
    pol_cum = _cumulative(policy.probs)

    def block(b):
        n = min(ROLLOUT_BLOCK, count - b * ROLLOUT_BLOCK)
        rng = derive_rng(rng_seed, tag, b)
        u0 = rng.random(n)
        ua = rng.random((n, H))
        us = rng.random((n, H))
        if tremble_prob > 0:
            trng = derive_rng(rng_seed, tag + ":tremble", b)
            tu = trng.random((n, H))
            ru = trng.random((n, H))
        else:
            tu = ru = np.empty((0, 0))
        return kernels.sample_rollouts(init_cum, trans_cum, pol_cum, u0, ua, us, tu, ru, float(tremble_prob))

    nblocks = -(-count // ROLLOUT_BLOCK)
    if workers > 1 and nblocks > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(block, range(nblocks)))
    else:
        parts = [block(b) for b in range(nblocks)]
    return [np.concatenate([p[i] for p in parts]) for i in range(4)]


def rollout(mdp: EpisodicMdp, policy: StochasticPolicy, rng_seed: int, count: int, *, tag="rollout", workers=1) -> TrajectoryBatch:
    """Sample ``count`` full-length trajectories; a pure function of the inputs and seed."""
    s, a, s2, _ = _sample(mdp, policy, rng_seed, count, tag, workers=workers)
    return TrajectoryBatch(s, a, s2)


def truncated_length(horizon: int, fraction) -> int:
    frac = Fraction(fraction).limit_denominator(10**9) if isinstance(fraction, float) else Fraction(fraction)
    return math.ceil(frac * horizon)


def make_demos(mdp, expert, n, truncation_fraction=1.0, tremble_prob=0.0, rng_seed=0, *, tag="rollout") -> DemoSet:
    """Expert rollouts with tremble noise, truncated to a prefix.

    At each step the executed action is replaced by a uniformly random one with
    probability ``tremble_prob``; the executed action is what gets recorded.
    With no noise and no truncation this reproduces ``rollout`` exactly.
    """
    if n < 1:
        raise ValueError("need at least one demonstration")
    if not 0 < truncation_fraction <= 1:
        raise ValueError("truncation_fraction must lie in (0, 1]")
    if not 0 <= tremble_prob < 1:
        raise ValueError("tremble_prob must lie in [0, 1)")
    s, a, s2, flips = _sample(mdp, expert, rng_seed, n, tag, tremble_prob=tremble_prob)
    L = truncated_length(mdp.horizon, truncation_fraction)
    batch = TrajectoryBatch(s[:, :L].copy(), a[:, :L].copy(), s2[:, :L].copy(), flips[:, :L].copy())
    return DemoSet(batch, float(truncation_fraction), float(tremble_prob))


def empirical_policy(demos: DemoSet, num_states, num_actions, smoothing=0.0) -> np.ndarray:
    """Step-stationary action frequencies ``pi_E(a|s)`` from the demonstrations."""
    t = demos.trajectories
    counts = np.zeros((num_states, num_actions))
    np.add.at(counts, (t.states.ravel(), t.actions.ravel()), 1.0)
    counts += smoothing
    totals = counts.sum(axis=1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        pi = np.where(totals > 0, counts / np.where(totals > 0, totals, 1.0), 1.0 / num_actions)
    return pi
