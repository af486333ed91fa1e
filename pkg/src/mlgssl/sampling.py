"""Positive/negative sample generation at four abstraction levels.

Levels, in canonical order: node, proximity, cluster, graph. For every
anchor node i the generator emits n1 positive and n2 negative samples as
(view id, node index) pairs. Positives always come from view 2; negatives
split between views 2 and 3 (node, proximity, cluster) or come entirely
from view 3 (graph). Index -1 is the pooled-readout sentinel used by the
optional graph_level_mode="pooled".
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .graph import Graph, _rng, k_hop_set

LEVELS = ("node", "proximity", "cluster", "graph")
POOLED = -1


@dataclass
class ClusterAssignment:
    k: int
    assign: np.ndarray
    centroids: np.ndarray


def kmeans(features: np.ndarray, k: int, seed, max_iter: int = 100) -> ClusterAssignment:
    """Lloyd's algorithm with distance-weighted (k-means++) seeding.

    Runs at most ``max_iter`` assignment rounds. An empty cluster is
    repaired by re-seeding its centroid at the point farthest from its
    current centroid. Every retained cluster is nonempty on return.
    """
    X = np.asarray(features, dtype=np.float64)
    n = X.shape[0]
    if not (1 <= k <= n):
        raise ValueError(f"k={k} outside [1, {n}]")
    rng = _rng(seed)

    centroids = np.empty((k, X.shape[1]))
    centroids[0] = X[rng.integers(n)]
    d2 = ((X - centroids[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total > 0:
            idx = rng.choice(n, p=d2 / total)
        else:
            idx = rng.integers(n)
        centroids[j] = X[idx]
        d2 = np.minimum(d2, ((X - centroids[j]) ** 2).sum(axis=1))

    assign = np.full(n, -1, dtype=np.int64)
    for _ in range(max_iter):
        dists = ((X[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        new_assign = dists.argmin(axis=1)
        own = dists[np.arange(n), new_assign]
        repaired = False
        for j in range(k):
            if not np.any(new_assign == j):
                far = int(own.argmax())
                centroids[j] = X[far]
                new_assign[far] = j
                own[far] = 0.0
                repaired = True
        if not repaired and np.array_equal(new_assign, assign):
            break
        assign = new_assign
        for j in range(k):
            centroids[j] = X[assign == j].mean(axis=0)
    else:
        dists = ((X[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        assign = dists.argmin(axis=1)
        # final safety pass: the cap must not leave an empty cluster behind
        own = dists[np.arange(n), assign]
        for j in range(k):
            if not np.any(assign == j):
                far = int(own.argmax())
                assign[far] = j
                own[far] = 0.0
                centroids[j] = X[far]

    return ClusterAssignment(k=k, assign=assign, centroids=centroids)


def inertia(features: np.ndarray, clustering: ClusterAssignment) -> float:
    X = np.asarray(features, dtype=np.float64)
    return float(((X - clustering.centroids[clustering.assign]) ** 2).sum())


def default_cluster_count(graph: Graph) -> int:
    """Label class count when labels exist, else ceil(sqrt(n))."""
    if graph.labels is not None:
        return int(np.unique(graph.labels).size)
    return int(math.ceil(math.sqrt(graph.n)))


@dataclass
class LevelSamples:
    """Per-anchor sample tables for one level.

    pos_idx/pos_view are (n, n1); neg_idx/neg_view are (n, n2). View ids
    are 2 or 3; index POOLED stands for the mean-pooled view embedding.
    Fallback counters record degenerate anchors (self-positives) and
    negative draws that exhausted rejection sampling.
    """

    level: str
    pos_idx: np.ndarray
    pos_view: np.ndarray
    neg_idx: np.ndarray
    neg_view: np.ndarray
    pos_fallbacks: int = 0
    neg_fallbacks: int = 0


def _split_neg_views(n2: int) -> np.ndarray:
    """Even split across views 2 and 3; odd count gives the extra to view 3."""
    n_v2 = n2 // 2
    return np.concatenate([np.full(n_v2, 2, np.uint8), np.full(n2 - n_v2, 3, np.uint8)])


def _walk_nodes(graph: Graph, start: int, kappa: int, rng) -> np.ndarray:
    """Distinct nodes visited by one kappa-step walk, sorted."""
    indptr, indices = graph.indptr, graph.indices
    seen = {start}
    cur = start
    for _ in range(kappa):
        lo, hi = indptr[cur], indptr[cur + 1]
        if hi > lo:
            cur = int(indices[lo + rng.integers(hi - lo)])
            seen.add(cur)
    return np.fromiter(sorted(seen), dtype=np.int64, count=len(seen))


def build_level_samples(level: str, graph: Graph, *, n1: int = 1, n2: int = 8,
                        kappa: int = 2, clusters: ClusterAssignment | None = None,
                        seed=0, graph_level_mode: str = "sample",
                        khop_cache: dict | None = None) -> LevelSamples:
    """Draw positive/negative samples for every anchor at one level.

    node       pos = the anchor itself in view 2; neg = uniform nodes != anchor.
    proximity  pos = nodes visited by a kappa-step walk from the anchor in the
               original graph; neg = nodes on kappa-step walks that start and
               stay outside the anchor's kappa-hop set (<= 20 rejection tries,
               then uniform outside the set, counted as a fallback).
    cluster    pos = uniform co-cluster nodes (self-positive fallback for
               singletons); neg = uniform nodes outside the cluster.
    graph      pos = uniform nodes from view 2; neg = uniform nodes from
               view 3 (or pooled sentinels in pooled mode).
    """
    if level not in LEVELS:
        raise ValueError(f"unknown level {level!r}")
    if n1 < 1 or n2 < 1:
        raise ValueError("n1 and n2 must be positive")
    if graph_level_mode not in ("sample", "pooled"):
        raise ValueError(f"unknown graph_level_mode {graph_level_mode!r}")
    n = graph.n
    rng = _rng(seed)
    neg_view_row = _split_neg_views(n2)
    neg_view = np.tile(neg_view_row, (n, 1))
    pos_view = np.full((n, n1), 2, dtype=np.uint8)
    pos_fallbacks = 0
    neg_fallbacks = 0

    if level == "node":
        if n1 != 1:
            raise ValueError("node level requires n1 == 1")
        if n < 2:
            raise ValueError("node level needs at least 2 nodes for negatives")
        pos_idx = np.arange(n, dtype=np.int64).reshape(n, 1)
        draws = rng.integers(0, n - 1, size=(n, n2))
        draws += draws >= np.arange(n, dtype=np.int64)[:, None]
        neg_idx = draws

    elif level == "proximity":
        if kappa < 1:
            raise ValueError("proximity level requires kappa >= 1")
        if khop_cache is None:
            khop_cache = {}
        pos_idx = np.empty((n, n1), dtype=np.int64)
        neg_idx = np.empty((n, n2), dtype=np.int64)
        all_nodes = np.arange(n, dtype=np.int64)
        for i in range(n):
            visited = _walk_nodes(graph, i, kappa, rng)
            candidates = visited[visited != i]
            if candidates.size == 0:
                pos_idx[i] = i
                pos_fallbacks += n1
            else:
                pos_idx[i] = candidates[rng.integers(candidates.size, size=n1)]

            hood = khop_cache.get(i)
            if hood is None:
                hood = np.zeros(n, dtype=bool)
                hood[k_hop_set(graph, i, kappa)] = True
                khop_cache[i] = hood
            outside = all_nodes[~hood]
            for slot in range(n2):
                if outside.size == 0:
                    # the kappa-hop set covers the graph; no valid negative
                    # exists, so fall back to any node != anchor
                    pick = int(rng.integers(n - 1))
                    neg_idx[i, slot] = pick + (pick >= i)
                    neg_fallbacks += 1
                    continue
                chosen = -1
                for _ in range(20):
                    start = int(outside[rng.integers(outside.size)])
                    walk = _walk_nodes(graph, start, kappa, rng)
                    if not np.any(hood[walk]):
                        chosen = int(walk[rng.integers(walk.size)])
                        break
                if chosen < 0:
                    chosen = int(outside[rng.integers(outside.size)])
                    neg_fallbacks += 1
                neg_idx[i, slot] = chosen

    elif level == "cluster":
        if clusters is None:
            raise ValueError("cluster level requires a ClusterAssignment")
        assign = clusters.assign
        if np.unique(assign).size < 2:
            raise ValueError("degenerate partition: a single cluster admits no negatives")
        members = [np.nonzero(assign == j)[0] for j in range(clusters.k)]
        pos_idx = np.empty((n, n1), dtype=np.int64)
        neg_idx = np.empty((n, n2), dtype=np.int64)
        outsiders = [np.nonzero(assign != j)[0] for j in range(clusters.k)]
        for i in range(n):
            c = int(assign[i])
            mates = members[c]
            mates = mates[mates != i]
            if mates.size == 0:
                pos_idx[i] = i
                pos_fallbacks += n1
            else:
                pos_idx[i] = mates[rng.integers(mates.size, size=n1)]
            out = outsiders[c]
            neg_idx[i] = out[rng.integers(out.size, size=n2)]

    else:  # graph
        if graph_level_mode == "pooled":
            pos_idx = np.full((n, n1), POOLED, dtype=np.int64)
            neg_idx = np.full((n, n2), POOLED, dtype=np.int64)
        else:
            pos_idx = rng.integers(0, n, size=(n, n1))
            neg_idx = rng.integers(0, n, size=(n, n2))
        neg_view = np.full((n, n2), 3, dtype=np.uint8)

    return LevelSamples(level=level, pos_idx=pos_idx, pos_view=pos_view,
                        neg_idx=neg_idx, neg_view=neg_view,
                        pos_fallbacks=pos_fallbacks, neg_fallbacks=neg_fallbacks)


def validate_level_samples(samples: LevelSamples, n: int) -> None:
    """Assert the structural invariants; raises AssertionError on violation."""
    s = samples
    assert s.pos_idx.shape == s.pos_view.shape
    assert s.neg_idx.shape == s.neg_view.shape
    assert s.pos_idx.shape[0] == n and s.neg_idx.shape[0] == n
    real_pos = s.pos_idx != POOLED
    real_neg = s.neg_idx != POOLED
    assert np.all((s.pos_idx[real_pos] >= 0) & (s.pos_idx[real_pos] < n))
    assert np.all((s.neg_idx[real_neg] >= 0) & (s.neg_idx[real_neg] < n))
    assert np.all(s.pos_view == 2)
    if s.level == "graph":
        assert np.all(s.neg_view == 3)
    else:
        assert np.all((s.neg_view == 2) | (s.neg_view == 3))
