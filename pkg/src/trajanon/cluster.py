"""Pairwise merge-cost matrices and spectral clustering of epoch sub-trajectories."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, Mapping, Optional, Sequence, Tuple

import numpy as np

from trajanon.merge import merge_cost
from trajanon.model import DomainError, Sample

KMEANS_MAX_ITER = 100


@dataclass(frozen=True)
class CostMatrix:
    users: Tuple[str, ...]
    costs: np.ndarray

    def __post_init__(self) -> None:
        n = len(self.users)
        if self.costs.shape != (n, n):
            raise DomainError(f"cost matrix shape {self.costs.shape} does not match {n} users")

    def __len__(self) -> int:
        return len(self.users)

    def cost(self, a: str, b: str) -> int:
        idx = {u: i for i, u in enumerate(self.users)}
        return int(self.costs[idx[a], idx[b]])


@dataclass(frozen=True)
class Clustering:
    assignment: Dict[str, int]
    n_clusters: int

    def members(self) -> list:
        groups = [[] for _ in range(self.n_clusters)]
        for user in sorted(self.assignment):
            groups[self.assignment[user]].append(user)
        return groups


def epoch_groups(trajectories: Mapping[str, Sequence[Sample]], start: int, stop: int) -> Dict[str, Tuple[Sample, ...]]:
    """Samples of each user inside ``[start, stop)``; users without samples are dropped."""
    out = {}
    for user in sorted(trajectories):
        part = tuple(s for s in trajectories[user] if start <= s.t < stop)
        if part:
            out[user] = part
    return out


def cost_matrix(groups: Mapping[str, Sequence[Sample]]) -> CostMatrix:
    """Pairwise optimal merge cost between every two users in ``groups``."""
    users = tuple(sorted(groups))
    n = len(users)
    costs = np.zeros((n, n), dtype=np.int64)
    for i in range(n):
        gi = groups[users[i]]
        for j in range(i + 1, n):
            c = merge_cost((gi, groups[users[j]]))
            costs[i, j] = costs[j, i] = c
    return CostMatrix(users, costs)


def pairwise_costs(dataset, epoch: int, epsilon: int) -> CostMatrix:
    """Cost matrix of the users present in ``epoch`` (1-based, ``epsilon`` slots long)."""
    if epoch < 1 or epsilon < 1:
        raise DomainError(f"invalid epoch {epoch} or epsilon {epsilon}")
    start = (epoch - 1) * epsilon
    trajs = {u: tr.samples for u, tr in dataset.trajectories.items()}
    return cost_matrix(epoch_groups(trajs, start, start + epsilon))


def similarity(m: CostMatrix) -> np.ndarray:
    """Gaussian-style kernel ``exp(-cost / sigma)`` with median off-diagonal bandwidth."""
    n = len(m)
    costs = m.costs.astype(float)
    if n < 2:
        return np.ones((n, n))
    off = costs[~np.eye(n, dtype=bool)]
    sigma = float(np.median(off))
    if sigma <= 0:
        return np.ones((n, n))
    return np.exp(-costs / sigma)


def normalized_laplacian(affinity: np.ndarray) -> np.ndarray:
    w = affinity.copy()
    np.fill_diagonal(w, 0.0)
    d = w.sum(axis=1)
    inv = np.zeros_like(d)
    nz = d > 0
    inv[nz] = 1.0 / np.sqrt(d[nz])
    return np.eye(len(w)) - inv[:, None] * w * inv[None, :]


def _kmeans(points: np.ndarray, n_clusters: int, rng: np.random.Generator) -> np.ndarray:
    """Lloyd iterations from k-means++ seeds; never leaves a cluster empty."""
    n = len(points)
    centers = [points[rng.integers(n)]]
    for _ in range(1, n_clusters):
        d2 = np.min([((points - c) ** 2).sum(axis=1) for c in centers], axis=0)
        total = d2.sum()
        if total <= 0:
            centers.append(points[rng.integers(n)])
        else:
            centers.append(points[rng.choice(n, p=d2 / total)])
    centers = np.array(centers)
    labels = np.full(n, -1)
    for _ in range(KMEANS_MAX_ITER):
        dist = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new = dist.argmin(axis=1)
        # refill empty clusters with the point farthest from its centre
        for c in range(n_clusters):
            if np.any(new == c):
                continue
            own = dist[np.arange(n), new]
            counts = np.bincount(new, minlength=n_clusters)
            movable = counts[new] > 1
            cand = np.where(movable)[0]
            far = cand[np.argmax(own[cand])]
            new[far] = c
        if np.array_equal(new, labels):
            break
        labels = new
        centers = np.array([points[labels == c].mean(axis=0) for c in range(n_clusters)])
    return labels


def spectral_cluster(m: CostMatrix, n_clusters: int, seed: int = 0) -> Clustering:
    """Partition the users of ``m`` into ``n_clusters`` groups of cheaply mergeable users."""
    n = len(m)
    if n_clusters < 1 or n_clusters > n:
        raise DomainError(f"cannot form {n_clusters} clusters from {n} users")
    users = m.users
    if n_clusters == 1:
        return Clustering({u: 0 for u in users}, 1)
    if n_clusters == n:
        return Clustering({u: i for i, u in enumerate(users)}, n)
    lap = normalized_laplacian(similarity(m))
    _, vecs = np.linalg.eigh(lap)
    emb = vecs[:, :n_clusters]
    norms = np.linalg.norm(emb, axis=1, keepdims=True)
    emb = emb / np.where(norms > 0, norms, 1.0)
    labels = _kmeans(emb, n_clusters, np.random.default_rng(seed))
    # relabel by first appearance so indices do not depend on k-means seeding order
    order: Dict[int, int] = {}
    for lab in labels:
        order.setdefault(int(lab), len(order))
    return Clustering({u: order[int(lab)] for u, lab in zip(users, labels)}, n_clusters)


def n_clusters_for(n_users: int, target: int) -> int:
    return max(1, math.ceil(n_users / target)) if n_users else 0


def cluster_epoch(m: CostMatrix, target: int, seed: int = 0) -> Optional[Clustering]:
    if len(m) == 0:
        return None
    return spectral_cluster(m, n_clusters_for(len(m), target), seed)
