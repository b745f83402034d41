"""k-nearest-neighbour state entropy: the particle estimator and the exploration bonus."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import digamma, gammaln

from . import kernels

DEFAULT_K = 3


class DuplicatePointsError(ValueError):
    """Raised when the entropy estimator meets a zero neighbour distance."""


@dataclass(frozen=True, eq=False)
class RepresentationBatch:
    points: np.ndarray
    k: int = DEFAULT_K

    def __post_init__(self):
        pts = np.ascontiguousarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2:
            raise ValueError("points must be a 2-d array of representations")
        if not 1 <= self.k < pts.shape[0]:
            raise ValueError(f"need 1 <= k < N, got k={self.k}, N={pts.shape[0]}")
        object.__setattr__(self, "points", pts)

    @classmethod
    def one_hot(cls, states, num_states, k=DEFAULT_K) -> RepresentationBatch:
        return cls(np.eye(num_states)[np.asarray(states).ravel()], k)

    def __len__(self):
        return self.points.shape[0]


def knn_distances(batch: RepresentationBatch) -> np.ndarray:
    """Distance from every point to its k-th nearest other point."""
    return kernels.knn_distances(batch.points, batch.k)[0]


def knn_distance(batch: RepresentationBatch, i: int) -> float:
    """Distance from point ``i`` to its k-th nearest other point (ties by index)."""
    pts = batch.points
    sq = np.zeros(len(pts))
    for j in range(pts.shape[1]):
        diff = pts[i, j] - pts[:, j]
        sq += diff * diff
    sq[i] = np.inf
    order = np.argsort(sq, kind="stable")
    return float(np.sqrt(sq[order[batch.k - 1]]))


def state_entropy_bonuses(batch: RepresentationBatch) -> np.ndarray:
    """``b(s_i) = log(||y_i - y_i^{kNN}|| + 1)`` for every point in the batch."""
    return np.log1p(knn_distances(batch))


def state_entropy_bonus(batch: RepresentationBatch, i: int) -> float:
    return math.log1p(knn_distance(batch, i))


def entropy_estimate(batch: RepresentationBatch) -> float:
    """Kozachenko-Leonenko differential entropy estimate in nats.

    ``mean_i log(N ||x_i - x_i^{kNN}||^d V_d / k) + log k - digamma(k)`` where
    ``V_d`` is the volume of the unit d-ball.
    """
    n, d = batch.points.shape
    dist = knn_distances(batch)
    if np.any(dist == 0):
        raise DuplicatePointsError("duplicate points make the k-NN entropy estimate diverge")
    log_unit_ball = 0.5 * d * math.log(math.pi) - gammaln(0.5 * d + 1.0)
    k = batch.k
    return float(math.log(n) - math.log(k) + log_unit_ball + d * np.mean(np.log(dist)) + math.log(k) - digamma(k))
