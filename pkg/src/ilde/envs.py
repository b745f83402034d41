"""Small built-in environments with a softened dynamic-programming expert."""

import numpy as np

from .mdp import EpisodicMdp, optimal_policy
from .rng import derive_rng

EXPERT_EPSILON = 0.1

# gridworld action order
MOVES = ((-1, 0), (1, 0), (0, -1), (0, 1))  # up, down, left, right


def _stationary(kernel, horizon):
    return np.broadcast_to(kernel, (horizon,) + kernel.shape).copy()


def chain(num_states=2, horizon=4, rng_seed=0):
    """Line of states; ``right`` advances with a seed-drawn success rate, ``left`` resets.

    Reward 1 at the last state and a small distractor reward at the first.
    """
    if num_states < 2:
        raise ValueError("chain needs at least two states")
    S, A = num_states, 2
    p_success = derive_rng(rng_seed, "chain").uniform(0.7, 0.95)
    P = np.zeros((S, A, S))
    for s in range(S):
        P[s, 0, max(s - 1, 0)] = 1.0
        P[s, 1, min(s + 1, S - 1)] += p_success
        P[s, 1, s] += 1.0 - p_success
    r = np.zeros((S, A))
    r[S - 1, :] = 1.0
    r[0, 0] = 0.1
    rho = np.zeros(S)
    rho[0] = 1.0
    return EpisodicMdp(_stationary(P, horizon), r, rho, name=f"chain{S}")


def river_swim(num_states=5, horizon=5, rng_seed=0, small_reward=0.05):
    """The river-swim benchmark: swimming left is safe and poorly paid,
    swimming right against the current is unreliable but leads to reward 1."""
    if num_states < 2:
        raise ValueError("river_swim needs at least two states")
    S, A = num_states, 2
    P = np.zeros((S, A, S))
    for s in range(S):
        P[s, 0, max(s - 1, 0)] = 1.0
        if s == 0:
            P[s, 1, s] += 0.4
            P[s, 1, min(s + 1, S - 1)] += 0.6
        elif s == S - 1:
            P[s, 1, s] += 0.6
            P[s, 1, s - 1] += 0.4
        else:
            P[s, 1, s - 1] += 0.05
            P[s, 1, s] += 0.6
            P[s, 1, s + 1] += 0.35
    r = np.zeros((S, A))
    r[0, 0] = small_reward
    r[S - 1, 1] = 1.0
    rho = np.zeros(S)
    rho[0] = 1.0
    return EpisodicMdp(_stationary(P, horizon), r, rho, name=f"river_swim{S}")


def gridworld(rows=3, cols=3, horizon=8, rng_seed=0, slip=0.1, num_hazards=None):
    """Grid with four compass moves, start in the top-left and goal in the bottom-right.

    Moves succeed with probability ``1 - slip`` and otherwise go in a uniformly
    random direction; bumping into a wall stays put. Reward 1 is earned per step
    spent on the goal. Hazard cells (placed by the seed, never on the start or
    goal) cost -1 per step.
    """
    if rows < 1 or cols < 1 or rows * cols < 2:
        raise ValueError("gridworld needs at least two cells")
    S, A = rows * cols, 4
    start, goal = 0, S - 1
    if num_hazards is None:
        num_hazards = max(0, (S - 2) // 4)
    candidates = np.arange(1, S - 1)
    rng = derive_rng(rng_seed, "gridworld")
    hazards = np.sort(rng.choice(candidates, size=min(num_hazards, len(candidates)), replace=False))
    P = np.zeros((S, A, S))
    for s in range(S):
        row, col = divmod(s, cols)
        dest = []
        for dr, dc in MOVES:
            nr, nc = row + dr, col + dc
            dest.append(nr * cols + nc if 0 <= nr < rows and 0 <= nc < cols else s)
        for a in range(A):
            P[s, a, dest[a]] += 1.0 - slip
            for d in dest:
                P[s, a, d] += slip / A
    r = np.zeros((S, A))
    r[goal, :] = 1.0
    r[hazards, :] = -1.0
    rho = np.zeros(S)
    rho[start] = 1.0
    return EpisodicMdp(_stationary(P, horizon), r, rho, name=f"gridworld{rows}x{cols}")


_BUILDERS = {"chain": chain, "river_swim": river_swim, "gridworld": gridworld}


def build_environment(kind, rng_seed=0, expert_epsilon=EXPERT_EPSILON, **size):
    """Return ``(mdp, expert)`` where the expert is the DP optimum made epsilon-greedy."""
    try:
        builder = _BUILDERS[kind]
    except KeyError:
        raise ValueError(f"unknown environment kind {kind!r}; expected one of {sorted(_BUILDERS)}") from None
    mdp = builder(rng_seed=rng_seed, **size)
    best, _ = optimal_policy(mdp, mdp.true_reward)
    return mdp, best.epsilon_greedy(expert_epsilon)
