"""Stage-2 aggregation: partition selected sources and pool each cluster.

``assign`` works on positions in the selected list, which is assumed to be
ordered by descending marginal score.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from dmem.errors import InvalidArgument
from dmem.mem import SourceSummary


class Strategy(str, Enum):
    ORDERED_COMBINE = "ordered_combine"
    EVENLY_DISTRIBUTED = "evenly_distributed"
    SINGLE_HALF_COMBINE_HALF = "single_half_combine_half"
    RANDOM = "random"
    RANDOM_AVERAGING = "random_averaging"
    KMEANS = "kmeans"
    SINGLETONS = "singletons"


@dataclass(frozen=True)
class ClusterAssignment:
    clusters: tuple[tuple[int, ...], ...]
    strategy: Strategy
    seed: int | None = None

    def __len__(self):
        return len(self.clusters)


@dataclass(frozen=True)
class KMeansResult:
    labels: np.ndarray
    centers: np.ndarray
    inertia: float
    initial_inertia: float  # inertia of the starting assignment of the winning restart
    n_iter: int


def _inertia(x, labels, centers):
    return float(np.sum((x - centers[labels]) ** 2))


def _repair_empty(x, labels, k):
    # move the farthest member of the largest cluster into each empty cluster
    for j in range(k):
        if np.any(labels == j):
            continue
        sizes = np.bincount(labels, minlength=k)
        big = int(np.argmax(sizes))
        members = np.flatnonzero(labels == big)
        far = members[np.argmax(np.abs(x[members] - x[members].mean()))]
        labels[far] = j
    return labels


def kmeans_1d(
    x: Sequence[float],
    k: int,
    rng: np.random.Generator,
    n_restarts: int = 25,
    max_iter: int = 100,
) -> KMeansResult:
    """Lloyd's k-means on scalars with random initial centers and restarts."""
    x = np.asarray(x, dtype=float)
    if k < 1 or k > x.size:
        raise InvalidArgument(f"k must be in [1, {x.size}], got {k}")
    best = None
    for _ in range(n_restarts):
        centers = x[rng.choice(x.size, size=k, replace=False)].copy()
        labels = _repair_empty(x, np.argmin(np.abs(x[:, None] - centers[None, :]), axis=1), k)
        centers = np.array([x[labels == j].mean() for j in range(k)])
        initial = _inertia(x, labels, centers)
        n_iter = 0
        for n_iter in range(1, max_iter + 1):
            new = _repair_empty(x, np.argmin(np.abs(x[:, None] - centers[None, :]), axis=1), k)
            centers = np.array([x[new == j].mean() for j in range(k)])
            if np.array_equal(new, labels):
                break
            labels = new
        result = KMeansResult(labels, centers, _inertia(x, labels, centers), initial, n_iter)
        if best is None or result.inertia < best.inertia:
            best = result
    return best


def _blocks(positions: Sequence[int], n_blocks: int) -> list[tuple[int, ...]]:
    # contiguous, near-equal sizes, earlier blocks larger by at most one
    return [tuple(int(i) for i in b) for b in np.array_split(np.asarray(positions), n_blocks) if len(b)]


def _canonical(clusters) -> tuple[tuple[int, ...], ...]:
    clusters = [tuple(sorted(c)) for c in clusters if len(c)]
    return tuple(sorted(clusters, key=lambda c: c[0]))


def assign(
    selected: Sequence[SourceSummary],
    strategy: Strategy | str = Strategy.RANDOM,
    M: int = 10,
    rng_seed: int | None = None,
    *,
    kmeans_restarts: int = 25,
    kmeans_max_iter: int = 100,
) -> ClusterAssignment:
    """Partition positions ``0..len(selected)-1`` into at most ``M`` clusters."""
    strategy = Strategy(strategy)
    if M < 1:
        raise InvalidArgument(f"M must be at least 1, got {M}")
    n = len(selected)
    if n == 0:
        raise InvalidArgument("cannot cluster an empty selection")
    positions = list(range(n))

    if n <= M or strategy is Strategy.SINGLETONS:
        if strategy is Strategy.SINGLETONS and n > M:
            raise InvalidArgument(f"{n} singleton clusters exceed M={M}")
        return ClusterAssignment(tuple((i,) for i in positions), strategy, rng_seed)

    if strategy is Strategy.ORDERED_COMBINE:
        clusters = _blocks(positions, M)
    elif strategy is Strategy.EVENLY_DISTRIBUTED:
        clusters = [tuple(positions[j::M]) for j in range(M)]
    elif strategy is Strategy.SINGLE_HALF_COMBINE_HALF:
        n_single, n_blocks = math.ceil(M / 2), M // 2
        if n_blocks == 0:
            clusters = [tuple(positions)]
        else:
            clusters = [(i,) for i in positions[:n_single]] + _blocks(positions[n_single:], n_blocks)
    elif strategy in (Strategy.RANDOM, Strategy.RANDOM_AVERAGING):
        rng = np.random.default_rng(rng_seed)
        clusters = _canonical(_blocks(rng.permutation(n), M))
    elif strategy is Strategy.KMEANS:
        rng = np.random.default_rng(rng_seed)
        km = kmeans_1d(
            [s.mean for s in selected], M, rng, n_restarts=kmeans_restarts, max_iter=kmeans_max_iter
        )
        clusters = _canonical([np.flatnonzero(km.labels == j) for j in range(M)])
    else:  # pragma: no cover
        raise InvalidArgument(f"unknown strategy {strategy}")
    return ClusterAssignment(tuple(tuple(int(i) for i in c) for c in clusters), strategy, rng_seed)


def pool(cluster: Sequence[SourceSummary], id: str | None = None) -> SourceSummary:
    """Precision-weighted merge of a cluster into one synthetic source.

    A one-member cluster is returned unchanged.
    """
    if len(cluster) == 0:
        raise InvalidArgument("cannot pool an empty cluster")
    if len(cluster) == 1 and id is None:
        return cluster[0]
    tau = np.array([s.precision for s in cluster])
    means = np.array([s.mean for s in cluster])
    n_total = sum(s.n for s in cluster)
    tau_total = float(tau.sum())
    # offset from the first member: exact when all members share one mean
    mean = cluster[0].mean + float(np.dot(tau, means - cluster[0].mean)) / tau_total
    return SourceSummary(
        id=id if id is not None else "+".join(s.id for s in cluster),
        n=n_total,
        mean=mean,
        variance=n_total / tau_total,
    )


def pool_assignment(
    selected: Sequence[SourceSummary], assignment: ClusterAssignment
) -> list[SourceSummary]:
    return [pool([selected[i] for i in c]) for c in assignment.clusters]
