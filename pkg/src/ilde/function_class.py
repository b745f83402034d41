"""Linear value-function classes, ridge regression and the D_F uncertainty.

For the class ``{clip(<w, phi(s,a)>, -H, H) : ||w|| <= B}`` the worst-case
disagreement ratio has a closed form. Writing ``g = w1 - w2`` (any ``g`` with
``||g|| <= 2B`` is reachable) the ratio ``|g.phi| / sqrt(sum_i (g.phi_i)^2 + lam)``
grows with ``||g||``, so the supremum sits on ``||g|| = 2B`` and equals::

    sqrt(phi^T (sum_i phi_i phi_i^T + lam / (4 B^2) I)^{-1} phi)

The supremum is taken over the pre-clip family; clipping can only shrink
differences, so this upper-bounds the clipped-class value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kvformat

NORM_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class FeatureMap:
    """Feature matrix with one row per ``(s, a)``, row index ``s * A + a``."""

    matrix: np.ndarray
    num_states: int
    num_actions: int
    tabular: bool = False

    def __post_init__(self):
        m = np.ascontiguousarray(self.matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != self.num_states * self.num_actions:
            raise ValueError(f"feature matrix must have {self.num_states * self.num_actions} rows")
        if not np.all(np.isfinite(m)):
            raise ValueError("features must be finite")
        if np.max(np.linalg.norm(m, axis=1)) > 1.0 + NORM_TOL:
            raise ValueError("feature vectors must have norm at most 1")
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)

    @classmethod
    def one_hot(cls, num_states, num_actions) -> FeatureMap:
        return cls(np.eye(num_states * num_actions), num_states, num_actions, tabular=True)

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def index(self, s, a):
        return np.asarray(s) * self.num_actions + np.asarray(a)

    def __call__(self, s, a) -> np.ndarray:
        return self.matrix[self.index(s, a)]

    def to_kv(self) -> dict:
        data = {
            "format": "ilde-features",
            "version": 1,
            "num_states": self.num_states,
            "num_actions": self.num_actions,
            "tabular": self.tabular,
        }
        if not self.tabular:
            kvformat.put_array(data, "matrix", self.matrix)
        return data

    @classmethod
    def from_kv(cls, data: dict) -> FeatureMap:
        if data.get("format") != "ilde-features":
            raise kvformat.KvFormatError("not an ilde-features document")
        S, A = data["num_states"], data["num_actions"]
        if data.get("tabular"):
            return cls.one_hot(S, A)
        return cls(kvformat.get_array(data, "matrix"), S, A)


@dataclass(frozen=True, eq=False)
class LinearFunctionClass:
    feature_map: FeatureMap
    weight_bound: float
    output_clip: float

    def __post_init__(self):
        if self.weight_bound < 0 or self.output_clip <= 0:
            raise ValueError("weight_bound must be >= 0 and output_clip > 0")

    @classmethod
    def tabular(cls, num_states, num_actions, horizon, weight_bound=None) -> LinearFunctionClass:
        """One-hot class whose ball is large enough to hold any table in [-H, H]."""
        fmap = FeatureMap.one_hot(num_states, num_actions)
        if weight_bound is None:
            weight_bound = horizon * math.sqrt(fmap.dim)
        return cls(fmap, float(weight_bound), float(horizon))

    def table(self, weights) -> np.ndarray:
        """Values ``f_w(s, a)`` as an ``(S, A)`` array."""
        vals = self.feature_map.matrix @ np.asarray(weights, dtype=float)
        return np.clip(vals, -self.output_clip, self.output_clip).reshape(
            self.feature_map.num_states, self.feature_map.num_actions
        )


def project_ball(w, radius):
    w = np.asarray(w, dtype=float)
    norm = np.linalg.norm(w)
    if norm > radius:
        return w * (radius / norm) if norm > 0 else w
    return w


def least_squares_fit(cls: LinearFunctionClass, states, actions, targets, lambda_ed=0.0) -> np.ndarray:
    """Ridge least squares over the class; returns the weight vector.

    ``lambda_ed = 0`` gives the minimum-norm solution. A solution outside the
    ``B``-ball is projected radially onto it.
    """
    targets = np.asarray(targets, dtype=float)
    if targets.size == 0:
        raise ValueError("least_squares_fit needs a nonempty dataset")
    Phi = cls.feature_map(np.asarray(states), np.asarray(actions))
    d = Phi.shape[1]
    if cls.feature_map.tabular:
        idx = cls.feature_map.index(states, actions)
        sums = np.bincount(idx, weights=targets, minlength=d)
        counts = np.bincount(idx, minlength=d).astype(float)
        denom = counts + lambda_ed
        w = np.divide(sums, denom, out=np.zeros(d), where=denom > 0)
    elif lambda_ed > 0:
        w = np.linalg.solve(Phi.T @ Phi + lambda_ed * np.eye(d), Phi.T @ targets)
    else:
        w = np.linalg.lstsq(Phi, targets, rcond=None)[0]
    return project_ball(w, cls.weight_bound)


class UncertaintyAccumulator:
    """Running normal matrix ``sum phi phi^T + lam / (4 B^2) I`` for one step ``h``.

    Single writer; ``uncertainty`` only reads. Tabular features keep a count
    vector instead of the full matrix.
    """

    def __init__(self, cls: LinearFunctionClass, lambda_ed: float):
        if lambda_ed < 0:
            raise ValueError("lambda_ed must be nonnegative")
        self.cls = cls
        self.lambda_ed = float(lambda_ed)
        B = cls.weight_bound
        self.degenerate = B == 0
        self.ridge = self.lambda_ed / (4.0 * B * B) if B > 0 else 0.0
        d = cls.feature_map.dim
        if cls.feature_map.tabular:
            self.counts = np.zeros(d)
        else:
            self.gram = np.zeros((d, d))

    def add(self, states, actions) -> None:
        idx = np.atleast_1d(self.cls.feature_map.index(states, actions))
        if self.cls.feature_map.tabular:
            self.counts += np.bincount(idx, minlength=self.counts.size)
        else:
            Phi = self.cls.feature_map.matrix[idx]
            self.gram += Phi.T @ Phi

    def _diag_uncertainty(self, Phi):
        if self.degenerate:
            return np.zeros(Phi.shape[0])
        if self.cls.feature_map.tabular:
            m = self.counts + self.ridge
            if np.any((m <= 0) & (Phi.sum(axis=0) != 0)):
                raise ValueError("singular normal matrix: lambda_ed = 0 with unvisited directions")
            with np.errstate(divide="ignore", invalid="ignore"):
                inv = np.where(m > 0, 1.0 / m, 0.0)
            quad = (Phi * Phi) @ inv
        else:
            M = self.gram + self.ridge * np.eye(self.gram.shape[0])
            if self.ridge == 0 and np.linalg.matrix_rank(M) < M.shape[0]:
                raise ValueError("singular normal matrix: lambda_ed = 0 and the history does not span the features")
            sol = np.linalg.solve(M, Phi.T)
            quad = np.einsum("ij,ji->i", Phi, sol)
        return np.sqrt(np.maximum(quad, 0.0))

    def uncertainty(self, s, a) -> float:
        phi = self.cls.feature_map(s, a)[None, :]
        return float(self._diag_uncertainty(phi)[0])

    def uncertainty_table(self) -> np.ndarray:
        fm = self.cls.feature_map
        return self._diag_uncertainty(fm.matrix).reshape(fm.num_states, fm.num_actions)


def d_f_uncertainty(cls: LinearFunctionClass, query, history, lambda_ed) -> float:
    """``D_F(z; history)`` for a query pair ``z = (s, a)`` and ``(s, a)`` history pairs."""
    acc = UncertaintyAccumulator(cls, lambda_ed)
    history = np.asarray(history, dtype=np.int64).reshape(-1, 2)
    if len(history):
        acc.add(history[:, 0], history[:, 1])
    return acc.uncertainty(*query)


def estimate_eluder_dim(cls: LinearFunctionClass, sequence, lambda_ed) -> float:
    """``sum_i min(1, D_F^2(z_i; z_1..z_{i-1}))`` computed incrementally."""
    seq = np.asarray(sequence, dtype=np.int64).reshape(-1, 2)
    if len(seq) == 0:
        raise ValueError("sequence must be nonempty")
    acc = UncertaintyAccumulator(cls, lambda_ed)
    total = 0.0
    for s, a in seq:
        total += min(1.0, acc.uncertainty(s, a) ** 2)
        acc.add(s, a)
    return total


def log_covering_number(dim, weight_bound, horizon, epsilon_f) -> float:
    """Linear-class surrogate ``d * log(1 + 4 B H / eps)`` for ``log N_F(eps)``."""
    return dim * math.log1p(4.0 * weight_bound * horizon / epsilon_f)


@dataclass(frozen=True)
class BonusConfig:
    """Exploration-bonus settings. ``None`` fields resolve to the theoretical
    choices ``gamma = H^2`` and ``eps_F = 1 / N``; ``beta_bonus = None`` uses the
    confidence-width coefficient, otherwise the given value is used verbatim."""

    lambda_ed: float = 1.0
    gamma_reg: float | None = None
    beta_bonus: float | None = None
    epsilon_f: float | None = None
    delta: float = 0.1

    def __post_init__(self):
        for name in ("lambda_ed", "gamma_reg", "beta_bonus", "epsilon_f", "delta"):
            v = getattr(self, name)
            if v is not None and (not math.isfinite(v) or v < 0):
                raise ValueError(f"{name} must be finite and nonnegative")

    def coefficient(self, cls: LinearFunctionClass, horizon: int, batch_size: int) -> float:
        if self.beta_bonus is not None:
            return float(self.beta_bonus)
        H, N = horizon, batch_size
        gamma = H * H if self.gamma_reg is None else self.gamma_reg
        eps = 1.0 / N if self.epsilon_f is None else self.epsilon_f
        if cls.weight_bound == 0:
            log_n = 0.0
        else:
            log_n = log_covering_number(cls.feature_map.dim, cls.weight_bound, H, eps)
        inner = 8.0 * H * H * (math.log(H / self.delta) + log_n) + 4.0 * eps * N + gamma
        return math.sqrt(inner)


def exploration_bonus(config: BonusConfig, cls: LinearFunctionClass, query, history, batch_size=None) -> float:
    """``b_h(s, a) = coefficient * D_F((s, a); D_h)``.

    The horizon is read off the class clip range; ``batch_size`` (the ``N``
    inside the coefficient) defaults to the history length.
    """
    history = np.asarray(history, dtype=np.int64).reshape(-1, 2)
    n = len(history) if batch_size is None else batch_size
    coef = config.coefficient(cls, int(round(cls.output_clip)), max(n, 1))
    if coef == 0:
        return 0.0
    return coef * d_f_uncertainty(cls, query, history, config.lambda_ed)
