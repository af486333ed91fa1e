"""Stochastic graph views: edge dropping, feature masking, row shuffling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import Graph, _rng


@dataclass(frozen=True)
class AugConfig:
    drop_edge_rate_1: float = 0.2
    drop_edge_rate_2: float = 0.4
    mask_feature_rate_1: float = 0.3
    mask_feature_rate_2: float = 0.4
    scheme: str = "uniform"

    def __post_init__(self):
        for r in (self.drop_edge_rate_1, self.drop_edge_rate_2,
                  self.mask_feature_rate_1, self.mask_feature_rate_2):
            if not (0.0 <= r <= 1.0):
                raise ValueError(f"rate {r} outside [0, 1]")
        if self.scheme != "uniform":
            raise ValueError(f"unknown masking scheme {self.scheme!r}")


@dataclass(frozen=True)
class GraphView:
    """A perturbed copy of a graph: surviving edges, transformed features.

    ``permutation`` is set only for the shuffled (negative) view; row i of
    its features is source row permutation[i].
    """

    n: int
    edges: np.ndarray
    features: np.ndarray
    permutation: np.ndarray | None = None


def identity_view(graph: Graph) -> GraphView:
    """The untouched graph as a view (used for clean-graph encoding)."""
    return GraphView(n=graph.n, edges=graph.edges, features=graph.features)


def drop_edges(source: Graph | GraphView, rate: float, seed) -> GraphView:
    """Keep each undirected edge independently with probability 1 - rate."""
    if not (0.0 <= rate <= 1.0):
        raise ValueError("rate outside [0, 1]")
    rng = _rng(seed)
    keep = rng.random(source.edges.shape[0]) >= rate
    return GraphView(n=source.n, edges=source.edges[keep],
                     features=source.features,
                     permutation=getattr(source, "permutation", None))


def mask_features(source: Graph | GraphView, rate: float, seed) -> GraphView:
    """Zero a column mask drawn once and shared by all nodes."""
    if not (0.0 <= rate <= 1.0):
        raise ValueError("rate outside [0, 1]")
    rng = _rng(seed)
    masked_cols = rng.random(source.features.shape[1]) < rate
    features = source.features.copy()
    features[:, masked_cols] = 0.0
    return GraphView(n=source.n, edges=source.edges, features=features,
                     permutation=getattr(source, "permutation", None))


def shuffle_nodes(source: Graph | GraphView, seed) -> GraphView:
    """Permute feature rows while keeping the topology fixed."""
    rng = _rng(seed)
    perm = rng.permutation(source.n)
    return GraphView(n=source.n, edges=source.edges,
                     features=source.features[perm], permutation=perm)


def generate_views(graph: Graph, config: AugConfig, seed) -> tuple[GraphView, GraphView, GraphView]:
    """Produce the two positive views and the shuffled negative view.

    Views 1 and 2 drop edges and mask feature columns at their own rates;
    view 3 keeps the topology and full features but permutes feature rows.
    Sub-streams are derived from one seed, so a single integer reproduces
    all three views.
    """
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    s1, s2, s3 = root.spawn(3)

    def positive(sub, edge_rate, feat_rate):
        e_seed, f_seed = sub.spawn(2)
        view = drop_edges(graph, edge_rate, e_seed)
        return mask_features(view, feat_rate, f_seed)

    v1 = positive(s1, config.drop_edge_rate_1, config.mask_feature_rate_1)
    v2 = positive(s2, config.drop_edge_rate_2, config.mask_feature_rate_2)
    v3 = shuffle_nodes(graph, s3)
    return v1, v2, v3
