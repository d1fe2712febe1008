import itertools

import numpy as np
import pytest
from sklearn.base import clone

from forestcal import KMeans, ValidationError, kmeans


def brute_force_sse(X, k):
    """Exhaustive minimum sum-of-squares over all k-partitions (oracle)."""
    n = X.shape[0]
    best = np.inf
    for assignment in itertools.product(range(k), repeat=n):
        if len(set(assignment)) != k:
            continue
        assignment = np.array(assignment)
        sse = 0.0
        for j in range(k):
            pts = X[assignment == j]
            sse += float(np.sum((pts - pts.mean(axis=0)) ** 2))
        best = min(best, sse)
    return best


FOUR_POINTS = np.array([[0.0, 0.0], [0.0, 1.0], [10.0, 10.0], [10.0, 11.0]])


def test_identical_vectors_single_cluster():
    labels, centers, objective = kmeans(np.array([[1.0, 2.0], [1.0, 2.0]]), 1)
    assert labels.tolist() == [0, 0]
    assert objective == 0.0
    np.testing.assert_array_equal(centers, [[1.0, 2.0]])


def test_two_pair_fixture_reaches_unique_optimum():
    labels, _, objective = kmeans(FOUR_POINTS, 2, random_state=0)
    assert objective == pytest.approx(1.0, abs=1e-12)
    assert labels[0] == labels[1] and labels[2] == labels[3] and labels[0] != labels[2]
    assert objective == pytest.approx(brute_force_sse(FOUR_POINTS, 2), abs=1e-12)


def test_k_equals_n_identity_partition():
    labels, _, objective = kmeans(FOUR_POINTS, 4)
    assert sorted(labels.tolist()) == [0, 1, 2, 3]
    assert objective == 0.0


def test_k_greater_than_n_rejected():
    with pytest.raises(ValidationError, match="exceeds"):
        kmeans(FOUR_POINTS, 5)


def test_non_finite_rejected():
    X = FOUR_POINTS.copy()
    X[0, 0] = np.nan
    with pytest.raises(ValidationError, match="non-finite"):
        kmeans(X, 2)


def test_deterministic_given_seed():
    rng = np.random.default_rng(7)
    X = rng.normal(size=(40, 5))
    a = KMeans(6, random_state=3).fit(X)
    b = KMeans(6, random_state=3).fit(X)
    np.testing.assert_array_equal(a.labels_, b.labels_)
    np.testing.assert_array_equal(a.cluster_centers_, b.cluster_centers_)
    assert a.inertia_ == b.inertia_


@pytest.mark.parametrize("seed", [0, 1, 2, 3])
def test_objective_non_increasing_each_iteration(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(60, 4))
    est = KMeans(5, random_state=seed).fit(X)
    diffs = np.diff(est.inertia_history_)
    assert (diffs <= 1e-9).all()


@pytest.mark.parametrize("seed", [0, 1, 2, 3, 4])
def test_two_cluster_matches_brute_force_on_separated_data(seed):
    # Two well-separated blobs: the local optimum is the global one.
    rng = np.random.default_rng(seed)
    X = np.concatenate([
        rng.normal(0.0, 0.3, size=(5, 3)),
        rng.normal(8.0, 0.3, size=(4, 3)),
    ])
    _, _, objective = kmeans(X, 2, random_state=seed)
    assert objective == pytest.approx(brute_force_sse(X, 2), rel=1e-12)


@pytest.mark.parametrize("seed", range(6))
def test_empty_cluster_repair_keeps_all_clusters_populated(seed):
    # Heavy duplication makes naive k-means produce empty clusters.
    X = np.array([[0.0, 0.0]] * 5 + [[10.0, 10.0]])
    est = KMeans(3, random_state=seed).fit(X)
    assert set(est.labels_.tolist()) == {0, 1, 2}


def test_predict_assigns_nearest_center():
    est = KMeans(2, random_state=0).fit(FOUR_POINTS)
    labels = est.predict(np.array([[0.0, 0.5], [10.0, 10.5]]))
    assert labels[0] == est.labels_[0]
    assert labels[1] == est.labels_[2]


def test_sklearn_params_round_trip():
    est = KMeans(7, random_state=5, max_iter=42, tol=1e-3)
    params = est.get_params()
    assert params == {"n_clusters": 7, "random_state": 5, "max_iter": 42, "tol": 1e-3}
    cloned = clone(est)
    assert cloned.get_params() == params
