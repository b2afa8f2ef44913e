"""Lloyd's k-means with k-means++ seeding, used as the comparison baseline."""

from dataclasses import dataclass, field

import numpy as np

from visclust._rng import as_generator
from visclust.errors import InfeasibleError, InvalidInputError


@dataclass(frozen=True)
class KMeansResult:
    """Labels are 1-based; ``history`` holds the inertia after every update."""

    labels: np.ndarray
    centers: np.ndarray
    inertia: float
    iterations: int
    history: tuple = field(default=())


def _sq_dists(x, centers):
    d2 = (
        np.sum(x * x, axis=1)[:, None]
        - 2.0 * x @ centers.T
        + np.sum(centers * centers, axis=1)[None, :]
    )
    return np.maximum(d2, 0.0)


def kmeans_plus_plus(x, n_c, rng):
    """Initial centers drawn with probability proportional to squared distance."""
    m = x.shape[0]
    centers = np.empty((n_c, x.shape[1]))
    centers[0] = x[rng.integers(m)]
    closest = np.sum((x - centers[0]) ** 2, axis=1)
    for j in range(1, n_c):
        total = closest.sum()
        if total <= 0:
            idx = rng.integers(m)
        else:
            idx = int(np.searchsorted(np.cumsum(closest), rng.random() * total, side="right"))
            idx = min(idx, m - 1)
        centers[j] = x[idx]
        closest = np.minimum(closest, np.sum((x - centers[j]) ** 2, axis=1))
    return centers


def _lloyd(x, centers, max_iter):
    history = []
    labels = None
    it = 0
    for it in range(1, max_iter + 1):
        d2 = _sq_dists(x, centers)
        new = np.argmin(d2, axis=1)
        if labels is not None and np.array_equal(new, labels):
            it -= 1
            break
        labels = new
        centers = centers.copy()
        for j in range(centers.shape[0]):
            members = labels == j
            if members.any():
                centers[j] = x[members].mean(axis=0)
        # reseed empty clusters at the point farthest from its center
        for j in range(centers.shape[0]):
            if not np.any(labels == j):
                far = int(np.argmax(np.sum((x - centers[labels]) ** 2, axis=1)))
                centers[j] = x[far]
                labels[far] = j
        history.append(float(np.sum((x - centers[labels]) ** 2)))
    labels = np.argmin(_sq_dists(x, centers), axis=1)
    inertia = float(np.sum((x - centers[labels]) ** 2))
    return labels, centers, inertia, max(it, 0), tuple(history)


def kmeans(x, n_c, restarts=10, max_iter=300, rng=None):
    """Best-of-``restarts`` Lloyd k-means.

    Parameters
    ----------
    x : array_like or Dataset
        ``(m, d)`` points.
    n_c : int
        Number of clusters, ``1 <= n_c <= m``.
    restarts : int
        Independent k-means++ initialisations; ties in inertia go to the
        earliest restart.
    max_iter : int
        Lloyd iteration cap per restart.
    rng : Generator, int or None

    Returns
    -------
    KMeansResult
    """
    x = np.asarray(getattr(x, "points", x), dtype=float)
    if x.ndim != 2 or x.shape[0] < 1:
        raise InvalidInputError("expected a non-empty (m, d) array")
    m = x.shape[0]
    if n_c < 1 or n_c > m:
        raise InfeasibleError(f"cannot form {n_c} clusters from {m} points")
    if restarts < 1 or max_iter < 1:
        raise InvalidInputError("restarts and max_iter must be positive")
    rng = as_generator(rng)
    best = None
    for _ in range(restarts):
        labels, centers, inertia, its, hist = _lloyd(x, kmeans_plus_plus(x, n_c, rng), max_iter)
        if best is None or inertia < best[2]:
            best = (labels, centers, inertia, its, hist)
    labels, centers, inertia, its, hist = best
    return KMeansResult(labels + 1, centers, inertia, its, hist)
