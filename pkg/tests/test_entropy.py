import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ilde import kernels
from ilde.entropy import (
    DuplicatePointsError,
    RepresentationBatch,
    entropy_estimate,
    knn_distance,
    knn_distances,
    state_entropy_bonus,
    state_entropy_bonuses,
)


def brute_knn(points, k):
    n = len(points)
    out = np.empty(n)
    for i in range(n):
        d = sorted((float(np.sum((points[i] - points[j]) ** 2)), j) for j in range(n) if j != i)
        out[i] = math.sqrt(d[k - 1][0])
    return out


def test_examples():
    assert knn_distance(RepresentationBatch(np.zeros((5, 2)), k=2), 3) == 0.0
    line = RepresentationBatch(np.array([0.0, 1.0, 3.0]), k=1)
    assert knn_distance(line, 1) == 1.0
    assert state_entropy_bonus(RepresentationBatch(np.array([[0.0], [0.0], [5.0]]), k=1), 0) == 0.0
    assert state_entropy_bonus(RepresentationBatch(np.array([0.0, math.e - 1]), k=1), 0) == pytest.approx(1.0, abs=1e-15)


def test_k_must_be_below_n():
    with pytest.raises(ValueError):
        RepresentationBatch(np.zeros((3, 2)), k=3)
    with pytest.raises(ValueError):
        RepresentationBatch(np.zeros((3, 2)), k=0)


@pytest.mark.parametrize("backend", ["python", "compiled"])
def test_matches_brute_force(backend):
    mod = kernels.python_backend if backend == "python" else kernels.compiled_backend
    if mod is None:
        pytest.skip("extension not built")
    rng = np.random.default_rng(0)
    pts = rng.normal(size=(200, 3))
    np.testing.assert_array_equal(mod.knn_distances(pts, 3)[0], brute_knn(pts, 3))
    for _ in range(100):
        n = int(rng.integers(2, 30))
        pts = rng.integers(0, 3, size=(n, 2)).astype(float)  # many ties
        k = int(rng.integers(1, n))
        np.testing.assert_array_equal(mod.knn_distances(pts, k)[0], brute_knn(pts, k))


def test_single_and_batch_agree(rng):
    batch = RepresentationBatch(rng.normal(size=(40, 2)), k=3)
    np.testing.assert_array_equal(knn_distances(batch), [knn_distance(batch, i) for i in range(40)])
    np.testing.assert_allclose(state_entropy_bonuses(batch), [state_entropy_bonus(batch, i) for i in range(40)], rtol=0, atol=1e-15)


def test_singleton_state_gets_largest_bonus():
    states = np.array([0] * 4 + [1] * 5 + [2] + [3] * 4)
    b = state_entropy_bonuses(RepresentationBatch.one_hot(states, 4, k=3))
    assert b[states == 2][0] == b.max()
    assert np.all(b[states != 2] == 0.0)


@given(st.integers(0, 2**31))
def test_permutation_and_translation_invariance(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(5, 40))
    pts = rng.integers(-3, 4, size=(n, 2)).astype(float)
    b = state_entropy_bonuses(RepresentationBatch(pts, k=2))
    perm = rng.permutation(n)
    np.testing.assert_array_equal(np.sort(state_entropy_bonuses(RepresentationBatch(pts[perm], k=2))), np.sort(b))
    shifted = state_entropy_bonuses(RepresentationBatch(pts + rng.normal(size=2), k=2))
    np.testing.assert_allclose(shifted, b, atol=1e-12)
    assert np.all(b >= 0)
    dist = knn_distances(RepresentationBatch(pts, k=2))
    np.testing.assert_array_equal(b == 0, dist == 0)


def test_entropy_calibration():
    rng = np.random.default_rng(11)
    sq = RepresentationBatch(rng.uniform(size=(2048, 2)), k=3)
    assert abs(entropy_estimate(sq)) <= 0.15
    seg = RepresentationBatch(rng.uniform(0, 2, size=2048), k=3)
    assert abs(entropy_estimate(seg) - math.log(2)) <= 0.15


def test_entropy_scaling_law(rng):
    pts = rng.normal(size=(300, 3))
    base = entropy_estimate(RepresentationBatch(pts))
    assert entropy_estimate(RepresentationBatch(2.5 * pts)) == pytest.approx(base + 3 * math.log(2.5), abs=1e-10)


def test_duplicates_rejected():
    with pytest.raises(DuplicatePointsError):
        entropy_estimate(RepresentationBatch(np.array([0.0, 0.0, 1.0, 2.0]), k=1))
