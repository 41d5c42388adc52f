"""Assignment of training rows to experts (random or k-means)."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError

__all__ = [
    "Strategy",
    "Partition",
    "n_experts_for",
    "random_partition",
    "kmeans_partition",
    "kmeans_plusplus",
    "lloyd",
]


class Strategy(enum.Enum):
    RANDOM = "random"
    KMEANS = "kmeans"


@dataclass(frozen=True, eq=False)
class Partition:
    assignments: np.ndarray
    n_experts: int
    strategy: Strategy
    seed: int

    def __post_init__(self):
        a = np.asarray(self.assignments, dtype=np.int64).copy()
        a.setflags(write=False)
        object.__setattr__(self, "assignments", a)
        if a.ndim != 1 or a.size == 0:
            raise InvalidArgumentError("assignments must be a non-empty vector")
        if a.min() < 0 or a.max() >= self.n_experts:
            raise InvalidArgumentError("assignment index out of range")
        if np.any(np.bincount(a, minlength=self.n_experts) == 0):
            raise InvalidArgumentError("every expert must own at least one row")

    @property
    def n(self) -> int:
        return self.assignments.shape[0]

    def rows(self, j: int) -> np.ndarray:
        """Row indices owned by expert ``j``, in increasing order."""
        return np.flatnonzero(self.assignments == j)

    def subsets(self) -> list[np.ndarray]:
        return [self.rows(j) for j in range(self.n_experts)]

    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignments, minlength=self.n_experts)


def n_experts_for(n: int, points_per_expert: int) -> int:
    if not 1 <= points_per_expert <= n:
        raise InvalidArgumentError(f"points_per_expert must lie in [1, {n}], got {points_per_expert}")
    return math.ceil(n / points_per_expert)


def random_partition(n: int, points_per_expert: int, seed: int = 0) -> Partition:
    """Shuffle rows with a seeded PRNG and deal them round-robin to ``ceil(n/ppe)`` experts."""
    J = n_experts_for(n, points_per_expert)
    perm = np.random.default_rng(seed).permutation(n)
    assignments = np.empty(n, dtype=np.int64)
    assignments[perm] = np.arange(n) % J
    return Partition(assignments, J, Strategy.RANDOM, seed)


def _sq_dists(X, C):
    # ‖x‖² - 2x·c + ‖c‖² can go slightly negative through cancellation
    d = (X * X).sum(1)[:, None] - 2.0 * X @ C.T + (C * C).sum(1)[None, :]
    return np.maximum(d, 0.0)


def kmeans_plusplus(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding: each new centre drawn with probability ∝ D(x)²."""
    n = X.shape[0]
    centers = np.empty((k, X.shape[1]))
    centers[0] = X[rng.integers(n)]
    closest = _sq_dists(X, centers[:1])[:, 0]
    for i in range(1, k):
        total = closest.sum()
        if total > 0:
            idx = rng.choice(n, p=closest / total)
        else:
            idx = rng.integers(n)
        centers[i] = X[idx]
        closest = np.minimum(closest, _sq_dists(X, centers[i:i + 1])[:, 0])
    return centers


def _repair_empty(X, labels, k, d2):
    # give each empty cluster the point of the currently largest cluster that
    # lies farthest from that cluster's centre
    counts = np.bincount(labels, minlength=k)
    for j in np.flatnonzero(counts == 0):
        big = int(np.argmax(counts))
        members = np.flatnonzero(labels == big)
        far = members[np.argmax(d2[members, big])]
        labels[far] = j
        counts[big] -= 1
        counts[j] += 1
    return labels


def lloyd(X: np.ndarray, k: int, rng: np.random.Generator, max_iter: int = 100):
    """Lloyd's algorithm from k-means++ seeds.

    Returns
    -------
    labels : (n,) int array with every cluster non-empty
    centers : (k, D) array
    trace : within-cluster sums of squares, one per assignment step
    """
    X = np.asarray(X, dtype=float)
    centers = kmeans_plusplus(X, k, rng)
    labels = None
    trace = []
    for _ in range(max(1, max_iter)):
        d2 = _sq_dists(X, centers)
        new = np.argmin(d2, axis=1)
        new = _repair_empty(X, new, k, d2)
        trace.append(float(np.sum((X - centers[new]) ** 2)))
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        centers = np.stack([X[labels == j].mean(axis=0) for j in range(k)])
    trace.append(float(np.sum((X - centers[labels]) ** 2)))
    return labels, centers, trace


def kmeans_partition(X, points_per_expert: int, seed: int = 0, max_iter: int = 100) -> Partition:
    """Cluster standardized inputs into ``ceil(n/ppe)`` experts.

    Clusters are not rebalanced, so actual expert sizes vary around the
    points-per-expert target.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    J = n_experts_for(X.shape[0], points_per_expert)
    labels, _, _ = lloyd(X, J, np.random.default_rng(seed), max_iter)
    return Partition(labels, J, Strategy.KMEANS, seed)
