"""Lloyd's k-means with k-means++ seeding."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ClusteringError


@dataclass(frozen=True, eq=False)
class KMeansResult:
    labels: np.ndarray      # cluster index per row
    centroids: np.ndarray   # (k, features)
    inertia: float
    iterations: int
    converged: bool


def _sq_dist(x: np.ndarray, c: np.ndarray) -> np.ndarray:
    return ((x[:, None, :] - c[None, :, :]) ** 2).sum(axis=2)


def kmeans_plusplus(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Seed centroids: each new one drawn with probability proportional to D(x)^2."""
    n = x.shape[0]
    centers = [x[rng.integers(n)]]
    d2 = ((x - centers[0]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            # every point coincides with a centre; pick any row not yet chosen
            idx = rng.integers(n)
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centers.append(x[idx])
        d2 = np.minimum(d2, ((x - x[idx]) ** 2).sum(axis=1))
    return np.array(centers, dtype=float)


def _repair_empty(x, labels, k, d2_own):
    """Give each empty cluster the farthest member of the currently largest cluster."""
    for c in range(k):
        if np.any(labels == c):
            continue
        counts = np.bincount(labels, minlength=k)
        big = int(np.argmax(counts))
        members = np.flatnonzero(labels == big)
        move = members[int(np.argmax(d2_own[members]))]
        labels[move] = c
        d2_own[move] = 0.0
    return labels


def kmeans(x, k: int, seed: int = 0, max_iterations: int = 300) -> KMeansResult:
    x = np.asarray(x, dtype=float)
    if x.ndim != 2:
        raise ValueError("features must be a 2-D array")
    n = x.shape[0]
    if not 1 <= k <= n:
        raise ClusteringError(f"K={k} must satisfy 1 <= K <= {n}")
    distinct = np.unique(x, axis=0).shape[0]
    if k > distinct:
        raise ClusteringError(f"K={k} exceeds the number of distinct feature rows ({distinct})")
    rng = np.random.default_rng(seed)
    centroids = kmeans_plusplus(x, k, rng)
    labels = None
    converged = False
    it = 0
    for it in range(1, max_iterations + 1):
        d2 = _sq_dist(x, centroids)
        new = np.argmin(d2, axis=1)
        new = _repair_empty(x, new, k, d2[np.arange(n), new].copy())
        if labels is not None and np.array_equal(new, labels):
            converged = True
            break
        labels = new
        centroids = np.array([x[labels == c].mean(axis=0) for c in range(k)])
    inertia = float(((x - centroids[labels]) ** 2).sum())
    return KMeansResult(labels, centroids, inertia, it, converged)
