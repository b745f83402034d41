"""Pure numpy implementations of the hot kernels.

These mirror ``_kernels.pyx`` operation for operation, so both backends
return bit-identical results for the same inputs.
"""

import numpy as np


def sample_rollouts(init_cum, trans_cum, pol_cum, u0, ua, us, tremble_u, rand_u, p_tremble):
    n, length = ua.shape
    num_actions = pol_cum.shape[2]
    states = np.empty((n, length), dtype=np.int64)
    actions = np.empty((n, length), dtype=np.int64)
    next_states = np.empty((n, length), dtype=np.int64)
    trembled = np.zeros((n, length), dtype=np.uint8)
    s = (init_cum[None, :] <= u0[:, None]).sum(axis=1)
    for h in range(length):
        states[:, h] = s
        a = (pol_cum[h, s] <= ua[:, h, None]).sum(axis=1)
        if p_tremble > 0.0:
            flip = tremble_u[:, h] < p_tremble
            rand_a = np.minimum((rand_u[:, h] * num_actions).astype(np.int64), num_actions - 1)
            a = np.where(flip, rand_a, a)
            trembled[:, h] = flip
        actions[:, h] = a
        s = (trans_cum[h, s, a] <= us[:, h, None]).sum(axis=1)
        next_states[:, h] = s
    return states, actions, next_states, trembled


def knn_distances(points, k):
    n, d = points.shape
    sq = np.zeros((n, n))
    for j in range(d):
        diff = points[:, None, j] - points[None, :, j]
        sq += diff * diff
    np.fill_diagonal(sq, np.inf)
    order = np.argsort(sq, axis=1, kind="stable")
    idx = order[:, k - 1]
    return np.sqrt(sq[np.arange(n), idx]), idx.astype(np.int64)


def gae(rewards, values, discount, gae_lambda):
    n, length = rewards.shape
    adv = np.zeros((n, length))
    last = np.zeros(n)
    for h in range(length - 1, -1, -1):
        delta = rewards[:, h] + discount * values[:, h + 1] - values[:, h]
        last = delta + discount * gae_lambda * last
        adv[:, h] = last
    return adv
