import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ilde.function_class import (
    BonusConfig,
    FeatureMap,
    LinearFunctionClass,
    UncertaintyAccumulator,
    d_f_uncertainty,
    estimate_eluder_dim,
    exploration_bonus,
    least_squares_fit,
    log_covering_number,
)


def tab(S=3, A=2, B=1.0, H=5):
    return LinearFunctionClass(FeatureMap.one_hot(S, A), B, H)


def random_linear_class(rng, d, S=3, A=2, B=1.0, H=5):
    m = rng.normal(size=(S * A, d))
    m /= np.maximum(np.linalg.norm(m, axis=1, keepdims=True), 1.0) * rng.uniform(1.0, 2.0, (S * A, 1))
    return LinearFunctionClass(FeatureMap(m, S, A), B, H)


def grid_sup(cls, query, history, lam):
    """Dense search over difference vectors g with ||g|| <= 2B."""
    fm = cls.feature_map
    phi = fm(*query)
    hist = np.array([fm(s, a) for s, a in history]).reshape(-1, fm.dim)
    d, R = fm.dim, 2 * cls.weight_bound
    if d == 1:
        g = np.arange(-R, R + 1e-12, 1e-3)[:, None]
    elif d == 2:
        t = np.linspace(0, 2 * np.pi, 40000, endpoint=False)
        g = R * np.stack([np.cos(t), np.sin(t)], axis=1)
    else:
        th, ph = np.meshgrid(np.linspace(0, np.pi, 700), np.linspace(0, 2 * np.pi, 1400, endpoint=False))
        g = R * np.stack([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)], axis=-1).reshape(-1, 3)
    num = np.abs(g @ phi)
    den = np.sqrt(((g @ hist.T) ** 2).sum(axis=1) + lam)
    return float(np.max(num / den))


def test_df_empty_history_tabular():
    assert d_f_uncertainty(tab(), (1, 1), [], 1.0) == pytest.approx(2.0, abs=1e-12)
    assert grid_sup(LinearFunctionClass(FeatureMap(np.ones((1, 1)), 1, 1), 1.0, 1), (0, 0), [], 1.0) == pytest.approx(2.0, abs=2e-3)


@pytest.mark.parametrize("k", [0, 1, 2, 5, 17])
def test_df_repeated_query_closed_form(k):
    value = d_f_uncertainty(tab(), (0, 1), [(0, 1)] * k, 1.0)
    assert value == pytest.approx(2 / math.sqrt(4 * k + 1), abs=1e-12)
    one_d = LinearFunctionClass(FeatureMap(np.ones((1, 1)), 1, 1), 1.0, 1)
    assert grid_sup(one_d, (0, 0), [(0, 0)] * k, 1.0) == pytest.approx(value, abs=2e-3)


def test_df_zero_radius_class():
    cls = tab(B=0.0)
    assert d_f_uncertainty(cls, (0, 0), [], 1.0) == 0.0
    assert estimate_eluder_dim(cls, [(0, 0), (1, 1)], 1.0) == 0.0
    assert exploration_bonus(BonusConfig(beta_bonus=3.0), cls, (0, 0), []) == 0.0


def test_df_singular_without_ridge():
    with pytest.raises(ValueError):
        d_f_uncertainty(tab(), (0, 0), [(1, 1)], 0.0)
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError):
        d_f_uncertainty(random_linear_class(rng, 3), (0, 0), [(1, 1)], 0.0)


def test_df_closed_form_matches_grid_search():
    rng = np.random.default_rng(7)
    for trial in range(50):
        d = 1 + trial % 3
        cls = random_linear_class(rng, d, B=rng.uniform(0.2, 1.0))
        lam = rng.uniform(0.2, 2.0)
        history = [tuple(x) for x in np.stack([rng.integers(0, 3, 6), rng.integers(0, 2, 6)], 1)[: rng.integers(0, 7)]]
        query = (int(rng.integers(0, 3)), int(rng.integers(0, 2)))
        assert d_f_uncertainty(cls, query, history, lam) == pytest.approx(grid_sup(cls, query, history, lam), abs=2e-3)


@given(st.integers(0, 2**31), st.integers(1, 4))
def test_df_monotone_in_history(seed, d):
    rng = np.random.default_rng(seed)
    cls = random_linear_class(rng, d)
    acc = UncertaintyAccumulator(cls, 1.0)
    prev = acc.uncertainty_table()
    for _ in range(15):
        acc.add(int(rng.integers(0, 3)), int(rng.integers(0, 2)))
        cur = acc.uncertainty_table()
        assert np.all(cur <= prev + 1e-9)
        prev = cur


def test_eluder_dim_examples():
    assert estimate_eluder_dim(tab(), [(0, 0)], 1.0) == 1.0
    pairs = [(s, a) for s in range(3) for a in range(2)]
    direct = sum(min(1.0, d_f_uncertainty(tab(), z, [], 1.0) ** 2) for z in pairs)
    assert estimate_eluder_dim(tab(), pairs, 1.0) == direct == 6.0


def test_elliptic_potential_logarithmic():
    rng = np.random.default_rng(3)
    seq = np.stack([rng.integers(0, 3, 200), rng.integers(0, 2, 200)], 1)
    assert estimate_eluder_dim(tab(), seq, 1.0) <= 6 * 8 * math.log(200)


def test_bonus_sequence_decreasing():
    cfg = BonusConfig(lambda_ed=1.0, beta_bonus=1.0)
    values = [exploration_bonus(cfg, tab(), (2, 0), [(2, 0)] * k) for k in range(101)]
    np.testing.assert_allclose(values, [2 / math.sqrt(4 * k + 1) for k in range(101)], atol=1e-12)
    assert np.all(np.diff(values) < 0)
    assert exploration_bonus(BonusConfig(beta_bonus=0.0), tab(), (0, 0), []) == 0.0


def test_bonus_coefficient_formula():
    cls = tab(S=5, A=2, B=2.0, H=5)
    H, N, delta = 5, 50, 0.1
    log_n = 10 * math.log(1 + 4 * 2.0 * H * N)
    expected = math.sqrt(8 * H * H * (math.log(H / delta) + log_n) + 4 * (1 / N) * N + H * H)
    assert BonusConfig(delta=delta).coefficient(cls, H, N) == pytest.approx(expected, rel=1e-12)
    assert log_covering_number(10, 2.0, H, 1 / N) == pytest.approx(log_n)
    with pytest.raises(ValueError):
        BonusConfig(beta_bonus=-1.0)


def test_least_squares_tabular_mean():
    cls = tab()
    w = least_squares_fit(cls, [1] * 5, [0] * 5, [1.0] * 5)
    assert cls.table(w)[1, 0] == 1.0
    assert not least_squares_fit(cls, [0, 1, 2], [0, 1, 0], [0.0, 0.0, 0.0]).any()
    with pytest.raises(ValueError):
        least_squares_fit(cls, [], [], [])


def test_least_squares_matches_gradient_descent():
    rng = np.random.default_rng(11)
    cls = random_linear_class(rng, 4, S=6, A=2, B=100.0)
    s, a = rng.integers(0, 6, 40), rng.integers(0, 2, 40)
    y = rng.uniform(-1, 1, 40)
    lam = 0.3
    w = least_squares_fit(cls, s, a, y, lam)
    Phi = cls.feature_map(s, a)
    v = np.zeros(4)
    step = 1.0 / (np.linalg.eigvalsh(Phi.T @ Phi).max() + lam)
    for _ in range(20000):
        v -= step * (Phi.T @ (Phi @ v - y) + lam * v)
    def loss(x):
        return np.sum((Phi @ x - y) ** 2) + lam * x @ x
    assert abs(loss(w) - loss(v)) <= 1e-6
    for _ in range(100):
        u = rng.normal(size=4)
        assert loss(w + 1e-4 * u / np.linalg.norm(u)) >= loss(w) - 1e-10


def test_least_squares_projects_onto_ball():
    cls = tab(B=0.5)
    w = least_squares_fit(cls, [0, 1], [0, 0], [3.0, 4.0])
    assert np.linalg.norm(w) == pytest.approx(0.5)
    np.testing.assert_allclose(w[[0, 2]] / np.linalg.norm(w), [0.6, 0.8])


def test_feature_map_validation_and_round_trip():
    with pytest.raises(ValueError):
        FeatureMap(np.full((2, 2), 1.0), 2, 1)
    fm = FeatureMap(np.array([[0.6, 0.8], [0.0, 1.0]]), 2, 1)
    back = FeatureMap.from_kv(fm.to_kv())
    np.testing.assert_array_equal(back.matrix, fm.matrix)
    assert FeatureMap.from_kv(FeatureMap.one_hot(3, 2).to_kv()).tabular
