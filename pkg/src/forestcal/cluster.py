"""Seeded Lloyd k-means used to group classes into parent clusters.

Kept in-house rather than delegated so the behaviors the rest of the
pipeline relies on are pinned: distance-proportional (k-means++ style)
seeding from an explicit seed, farthest-point re-seeding of empty
clusters, a per-iteration objective trace, and bit-reproducible output
for a given (data, parameters) pair.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin

from .errors import ValidationError
from .validation import as_finite_array


def _squared_distances(X: np.ndarray, centers: np.ndarray) -> np.ndarray:
    # (n, k) matrix of squared Euclidean distances, clipped against
    # cancellation in the expanded form.
    d2 = (
        np.einsum("ij,ij->i", X, X)[:, None]
        - 2.0 * X @ centers.T
        + np.einsum("ij,ij->i", centers, centers)[None, :]
    )
    return np.maximum(d2, 0.0)


def _plusplus_init(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """First center uniform, each next one proportional to squared distance."""
    n = X.shape[0]
    centers = np.empty((k, X.shape[1]), dtype=np.float64)
    centers[0] = X[rng.integers(n)]
    closest = _squared_distances(X, centers[:1]).ravel()
    for j in range(1, k):
        total = closest.sum()
        if total > 0:
            idx = rng.choice(n, p=closest / total)
        else:
            # All points coincide with chosen centers; any pick works.
            idx = int(rng.integers(n))
        centers[j] = X[idx]
        closest = np.minimum(closest, _squared_distances(X, centers[j : j + 1]).ravel())
    return centers


class KMeans(BaseEstimator, ClusterMixin):
    """K-means clustering with deterministic seeding.

    Parameters
    ----------
    n_clusters : int
        Number of clusters (must not exceed the number of samples).
    random_state : int
        Seed for center initialization. Identical inputs and seed give
        bit-identical results.
    max_iter : int
        Maximum number of Lloyd iterations.
    tol : float
        Stop once the objective decreases by no more than this between
        iterations (0 runs to exact assignment convergence).

    Attributes
    ----------
    cluster_centers_ : ndarray of shape (n_clusters, n_features)
    labels_ : ndarray of shape (n_samples,)
    inertia_ : float
        Sum of squared distances to assigned centers.
    inertia_history_ : list of float
        Objective after each iteration; non-increasing.
    n_iter_ : int
    """

    def __init__(self, n_clusters: int = 8, *, random_state: int = 0,
                 max_iter: int = 100, tol: float = 0.0):
        self.n_clusters = n_clusters
        self.random_state = random_state
        self.max_iter = max_iter
        self.tol = tol

    def fit(self, X, y=None):
        X = as_finite_array(X, "feature table", ndim=2)
        n = X.shape[0]
        k = self.n_clusters
        if k < 1:
            raise ValidationError(f"n_clusters must be >= 1, got {k}")
        if k > n:
            raise ValidationError(f"n_clusters={k} exceeds number of samples {n}")
        if self.max_iter < 1:
            raise ValidationError(f"max_iter must be positive, got {self.max_iter}")
        if self.tol < 0:
            raise ValidationError(f"tol must be non-negative, got {self.tol}")

        rng = np.random.default_rng(self.random_state)
        centers = _plusplus_init(X, k, rng)
        labels = None
        history: list[float] = []
        prev = np.inf
        for it in range(self.max_iter):
            new_labels = np.argmin(_squared_distances(X, centers), axis=1)
            new_labels = self._repair_empty(X, centers, new_labels, k)
            if labels is not None and np.array_equal(new_labels, labels):
                break
            labels = new_labels
            centers = np.stack([X[labels == j].mean(axis=0) for j in range(k)])
            inertia = float(
                np.sum((X - centers[labels]) ** 2)
            )
            history.append(inertia)
            if prev - inertia <= self.tol:
                break
            prev = inertia

        self.cluster_centers_ = centers
        self.labels_ = labels
        self.inertia_ = history[-1] if history else 0.0
        self.inertia_history_ = history
        self.n_iter_ = len(history)
        return self

    @staticmethod
    def _repair_empty(X, centers, labels, k: int) -> np.ndarray:
        """Re-seed each empty cluster from the point farthest from its center."""
        labels = labels.copy()
        for j in range(k):
            if (labels == j).any():
                continue
            dist = np.einsum("ij,ij->i", X - centers[labels], X - centers[labels])
            # A singleton cluster must not donate its only member.
            counts = np.bincount(labels, minlength=k)
            dist[counts[labels] <= 1] = -1.0
            donor = int(np.argmax(dist))
            centers[j] = X[donor]
            labels[donor] = j
        return labels

    def predict(self, X):
        X = as_finite_array(X, "feature table", ndim=2)
        return np.argmin(_squared_distances(X, self.cluster_centers_), axis=1)

    def fit_predict(self, X, y=None):
        return self.fit(X).labels_


def kmeans(X, n_clusters: int, *, random_state: int = 0, max_iter: int = 100,
           tol: float = 0.0) -> tuple[np.ndarray, np.ndarray, float]:
    """Functional form: returns (assignments, centroids, objective)."""
    est = KMeans(n_clusters, random_state=random_state, max_iter=max_iter, tol=tol).fit(X)
    return est.labels_, est.cluster_centers_, est.inertia_
