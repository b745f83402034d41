# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels; see ``_kernels_py`` for the reference semantics."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, INFINITY

cnp.import_array()


cdef inline Py_ssize_t _draw(const double[:] cum, double u) noexcept nogil:
    cdef Py_ssize_t j = 0
    cdef Py_ssize_t last = cum.shape[0]
    while j < last and cum[j] <= u:
        j += 1
    return j


def sample_rollouts(const double[:] init_cum, const double[:, :, :, :] trans_cum,
                    const double[:, :, :] pol_cum, const double[:] u0,
                    const double[:, :] ua, const double[:, :] us,
                    const double[:, :] tremble_u, const double[:, :] rand_u,
                    double p_tremble):
    cdef Py_ssize_t n = ua.shape[0]
    cdef Py_ssize_t length = ua.shape[1]
    cdef Py_ssize_t num_actions = pol_cum.shape[2]
    states_arr = np.empty((n, length), dtype=np.int64)
    actions_arr = np.empty((n, length), dtype=np.int64)
    next_arr = np.empty((n, length), dtype=np.int64)
    trembled_arr = np.zeros((n, length), dtype=np.uint8)
    cdef long long[:, :] states = states_arr
    cdef long long[:, :] actions = actions_arr
    cdef long long[:, :] next_states = next_arr
    cdef unsigned char[:, :] trembled = trembled_arr
    cdef Py_ssize_t i, h, s, a
    with nogil:
        for i in range(n):
            s = _draw(init_cum, u0[i])
            for h in range(length):
                states[i, h] = s
                a = _draw(pol_cum[h, s], ua[i, h])
                if p_tremble > 0.0 and tremble_u[i, h] < p_tremble:
                    a = <Py_ssize_t>(rand_u[i, h] * num_actions)
                    if a > num_actions - 1:
                        a = num_actions - 1
                    trembled[i, h] = 1
                actions[i, h] = a
                s = _draw(trans_cum[h, s, a], us[i, h])
                next_states[i, h] = s
    return states_arr, actions_arr, next_arr, trembled_arr


def knn_distances(const double[:, :] points, Py_ssize_t k):
    cdef Py_ssize_t n = points.shape[0]
    cdef Py_ssize_t d = points.shape[1]
    dist_arr = np.empty(n, dtype=np.float64)
    idx_arr = np.empty(n, dtype=np.int64)
    cdef double[:] dist = dist_arr
    cdef long long[:] idx = idx_arr
    best_val_arr = np.empty(k, dtype=np.float64)
    best_idx_arr = np.empty(k, dtype=np.int64)
    cdef double[:] best_val = best_val_arr
    cdef long long[:] best_idx = best_idx_arr
    cdef Py_ssize_t i, j, t, m, filled
    cdef double sq, diff
    with nogil:
        for i in range(n):
            filled = 0
            for j in range(n):
                if j == i:
                    continue
                sq = 0.0
                for t in range(d):
                    diff = points[i, t] - points[j, t]
                    sq = sq + diff * diff
                # ascending (value, index) insertion into the k best; j increases so ties keep order
                if filled == k and sq >= best_val[k - 1]:
                    continue
                m = filled if filled < k else k - 1
                while m > 0 and best_val[m - 1] > sq:
                    best_val[m] = best_val[m - 1]
                    best_idx[m] = best_idx[m - 1]
                    m -= 1
                best_val[m] = sq
                best_idx[m] = j
                if filled < k:
                    filled += 1
            dist[i] = sqrt(best_val[k - 1])
            idx[i] = best_idx[k - 1]
    return dist_arr, idx_arr


def gae(const double[:, :] rewards, const double[:, :] values, double discount, double gae_lambda):
    cdef Py_ssize_t n = rewards.shape[0]
    cdef Py_ssize_t length = rewards.shape[1]
    adv_arr = np.zeros((n, length), dtype=np.float64)
    cdef double[:, :] adv = adv_arr
    cdef Py_ssize_t i, h
    cdef double last, delta
    with nogil:
        for i in range(n):
            last = 0.0
            for h in range(length - 1, -1, -1):
                delta = rewards[i, h] + discount * values[i, h + 1] - values[i, h]
                last = delta + discount * gae_lambda * last
                adv[i, h] = last
    return adv_arr
