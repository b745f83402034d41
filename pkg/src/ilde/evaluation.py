"""Evaluation quantities: the uncertainty-regularized loss, regret against the
saddle policy, sample efficiency and improvement over the expert."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .curiosity import expected_intrinsic, intrinsic_table
from .imitation import LinearRewardClass, feature_occupancy
from .mdp import EpisodicMdp, StochasticPolicy, expected_return

NEVER = "never"


def saddle_loss(mdp, policy, reward, expert, curiosity_model=None, lam=0.0) -> float:
    """``J(pi_E, r) - J(pi, r) - lam * Int(pi)``, all exact."""
    loss = expected_return(mdp, expert, reward) - expected_return(mdp, policy, reward)
    if lam != 0:
        if curiosity_model is None:
            raise ValueError("lam > 0 needs a curiosity model")
        loss -= lam * expected_intrinsic(mdp, policy, curiosity_model)
    return float(loss)


def _intrinsic(mdp, policy, model, lam):
    return expected_intrinsic(mdp, policy, model) if lam != 0 else 0.0


def worst_case_loss(mdp, policy, expert, reward_class: LinearRewardClass, curiosity_model=None, lam=0.0) -> float:
    """``max_r l(pi, r)`` over the ball class: ``R ||gap|| - lam Int(pi)``."""
    fm = reward_class.feature_map
    gap = feature_occupancy(mdp, expert, fm) - feature_occupancy(mdp, policy, fm)
    return float(reward_class.radius * np.linalg.norm(gap) - lam * _intrinsic(mdp, policy, curiosity_model, lam))


def saddle_policy(mdp: EpisodicMdp, expert, reward_class: LinearRewardClass, curiosity_model=None, lam=0.0):
    """Minimizer of the worst-case loss, solved as a convex program over
    occupancy measures (second-order cone); returns ``(policy, value)``.

    States with zero occupancy at a step get the expert's action distribution.
    """
    import cvxpy as cp

    H, S, A = mdp.horizon, mdp.num_states, mdp.num_actions
    fm = reward_class.feature_map
    target = feature_occupancy(mdp, expert, fm)
    L = intrinsic_table(curiosity_model, mdp) if lam != 0 else np.zeros((H, S, A))
    d = [cp.Variable(S * A, nonneg=True) for _ in range(H)]
    # row s of `pick` sums d over actions at state s
    pick = np.kron(np.eye(S), np.ones((1, A)))
    cons = [pick @ d[0] == mdp.initial_dist]
    for h in range(H - 1):
        flow = mdp.transitions[h].reshape(S * A, S).T  # (S', S*A)
        cons.append(pick @ d[h + 1] == flow @ d[h])
    total = sum(d)
    objective = reward_class.radius * cp.norm(fm.matrix.T @ total - target, 2)
    if lam != 0:
        objective = objective - lam * sum(L[h].ravel() @ d[h] for h in range(H))
    prob = cp.Problem(cp.Minimize(objective), cons)
    prob.solve(solver=cp.CLARABEL)
    if prob.status not in ("optimal", "optimal_inaccurate"):
        raise RuntimeError(f"saddle-policy program failed: {prob.status}")
    occ = np.maximum(np.array([v.value for v in d]).reshape(H, S, A), 0.0)
    mass = occ.sum(axis=2, keepdims=True)
    probs = np.where(mass > 1e-10, occ / np.where(mass > 1e-10, mass, 1.0), expert.probs)
    policy = StochasticPolicy(probs / probs.sum(axis=2, keepdims=True))
    return policy, worst_case_loss(mdp, policy, expert, reward_class, curiosity_model, lam)


@dataclass(frozen=True)
class RegretLedger:
    increments: np.ndarray  # l(pi^t, r_max) - l(pi*, r_max) at the final maximizing reward
    cumulative: np.ndarray  # prefix sums of ``increments``
    regret_curve: np.ndarray  # Regret(t) with the max over r taken separately per prefix
    max_theta: np.ndarray
    reference_loss: float  # max_r l(pi*, r)

    @property
    def total(self) -> float:
        return float(self.regret_curve[-1])

    def rows(self):
        return [
            {"t": t + 1, "ell_increment_at_max_r": float(inc), "cumulative_regret": float(cum), "regret_at_t": float(reg)}
            for t, (inc, cum, reg) in enumerate(zip(self.increments, self.cumulative, self.regret_curve))
        ]


def compute_regret(mdp, policies, reward_class: LinearRewardClass, reference, expert, curiosity_model=None, lam=0.0) -> RegretLedger:
    """``Regret(T) = max_r sum_t l(pi^t, r) - l(pi*, r)`` for every prefix ``T``.

    The reward-dependent part is linear in ``theta``, so the max over the ball
    is ``R`` times the norm of the summed feature-occupancy gaps.
    """
    fm = reward_class.feature_map
    R = reward_class.radius
    ref_feat = feature_occupancy(mdp, reference, fm)
    ref_int = _intrinsic(mdp, reference, curiosity_model, lam)
    # l(pi, theta) - l(pi*, theta) = <theta, occ(pi*) - occ(pi)> - lam (Int(pi) - Int(pi*))
    lin = np.array([ref_feat - feature_occupancy(mdp, p, fm) for p in policies])
    const = np.array([-lam * (_intrinsic(mdp, p, curiosity_model, lam) - ref_int) for p in policies])
    lin_cum = np.cumsum(lin, axis=0)
    regret_curve = R * np.linalg.norm(lin_cum, axis=1) + np.cumsum(const)
    norm = np.linalg.norm(lin_cum[-1])
    theta = R * lin_cum[-1] / norm if norm > 0 else np.zeros(fm.dim)
    increments = lin @ theta + const
    ref_loss = worst_case_loss(mdp, reference, expert, reward_class, curiosity_model, lam)
    return RegretLedger(increments, np.cumsum(increments), regret_curve, theta, ref_loss)


def loglog_slope(curve, start_fraction=0.5) -> float:
    """Least-squares slope of ``log curve[t]`` against ``log t`` over the tail."""
    curve = np.asarray(curve, dtype=float)
    T = len(curve)
    t = np.arange(1, T + 1)
    lo = int(np.floor(start_fraction * T))
    x, y = t[lo:], curve[lo:]
    if np.any(y <= 0):
        raise ValueError("log-log slope needs a positive curve")
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def sample_efficiency(j_values, expert_j, total_t, eval_points=None):
    """First evaluation point from which ``J >= expert_J`` holds through the end,
    as a fraction of ``total_t``; ``"never"`` if there is none."""
    j = np.asarray(j_values, dtype=float)
    if j.size == 0:
        raise ValueError("empty trace")
    points = np.arange(1, j.size + 1) if eval_points is None else np.asarray(eval_points)
    ok = j >= expert_j
    if not ok[-1]:
        return NEVER
    bad = np.flatnonzero(~ok)
    first = 0 if bad.size == 0 else bad[-1] + 1
    return float(points[first] / total_t)


def improvement_vs_expert(final_j, expert_j) -> float:
    """Mean of ``final_J / expert_J`` over instances."""
    expert = np.broadcast_to(np.asarray(expert_j, dtype=float), np.shape(final_j))
    if np.any(expert == 0):
        raise ValueError("expert return is zero: the ratio is undefined, report the absolute difference")
    return float(np.mean(np.asarray(final_j, dtype=float) / expert))
