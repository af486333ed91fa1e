"""Graph container, on-disk bundle IO, block-model synthesis, walks.

A graph bundle is a directory with three tab-separated files:

* ``edges.tsv``    one undirected edge per line, two 0-based node ids
* ``features.tsv`` one node per line, tab-separated decimal floats
* ``labels.tsv``   optional, one integer class id per line

All files are UTF-8 with LF line endings. The number of feature rows
defines the node count.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np


class BundleError(ValueError):
    """An on-disk bundle violates the format contract."""


def _rng(seed) -> np.random.Generator:
    """Accept an int seed, a SeedSequence, or an existing Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


@dataclass(frozen=True)
class Graph:
    """Simple undirected graph with node features and optional labels.

    ``edges`` stores each undirected edge once as (u, v) with u < v, sorted
    lexicographically. ``indptr``/``indices`` are a CSR adjacency over the
    symmetric edge set, so ``neighbors(v)`` is a sorted contiguous slice.
    """

    n: int
    edges: np.ndarray
    features: np.ndarray
    labels: np.ndarray | None
    indptr: np.ndarray
    indices: np.ndarray

    @property
    def num_edges(self) -> int:
        return int(self.edges.shape[0])

    @property
    def num_features(self) -> int:
        return int(self.features.shape[1])

    def neighbors(self, v: int) -> np.ndarray:
        return self.indices[self.indptr[v]:self.indptr[v + 1]]

    def degree(self, v: int) -> int:
        return int(self.indptr[v + 1] - self.indptr[v])

    def edge_set(self) -> set[tuple[int, int]]:
        return {(int(u), int(v)) for u, v in self.edges}


def _csr_from_edges(n: int, edges: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if edges.shape[0] == 0:
        return np.zeros(n + 1, dtype=np.int64), np.zeros(0, dtype=np.int64)
    sym = np.concatenate([edges, edges[:, ::-1]], axis=0)
    order = np.lexsort((sym[:, 1], sym[:, 0]))
    sym = sym[order]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(indptr, sym[:, 0] + 1, 1)
    indptr = np.cumsum(indptr)
    return indptr, sym[:, 1].copy()


def make_graph(n: int, edges, features, labels=None) -> Graph:
    """Build a Graph, silently normalizing self-loops and duplicate edges.

    Edges are canonicalized to u < v, deduplicated, and sorted. Node ids
    must lie in [0, n); features must have exactly n rows.
    """
    if n < 1:
        raise ValueError("graph needs at least one node")
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[0] != n:
        raise ValueError(f"features must be (n, d), got {features.shape} for n={n}")
    if edges.size and (edges.min() < 0 or edges.max() >= n):
        raise ValueError("edge endpoint out of range")
    keep = edges[:, 0] != edges[:, 1]
    edges = edges[keep]
    lo = np.minimum(edges[:, 0], edges[:, 1])
    hi = np.maximum(edges[:, 0], edges[:, 1])
    edges = np.unique(np.stack([lo, hi], axis=1), axis=0)
    if labels is not None:
        labels = np.asarray(labels, dtype=np.int64)
        if labels.shape != (n,):
            raise ValueError(f"labels must be (n,), got {labels.shape}")
    indptr, indices = _csr_from_edges(n, edges)
    return Graph(n=n, edges=edges, features=features, labels=labels,
                 indptr=indptr, indices=indices)


def load_graph_bundle(path) -> Graph:
    """Load a bundle directory. Strict about file format.

    Raises BundleError on a missing file, a node index out of range, ragged
    feature rows, or a self-loop edge line (reported with file:line).
    """
    path = Path(path)
    feat_file = path / "features.tsv"
    edge_file = path / "edges.tsv"
    if not feat_file.is_file():
        raise BundleError(f"missing {feat_file}")
    if not edge_file.is_file():
        raise BundleError(f"missing {edge_file}")

    rows = []
    width = None
    for lineno, line in enumerate(feat_file.read_text(encoding="utf-8").splitlines(), 1):
        parts = line.split("\t")
        if width is None:
            width = len(parts)
        elif len(parts) != width:
            raise BundleError(
                f"features.tsv:{lineno}: expected {width} fields, got {len(parts)}")
        try:
            rows.append([float(x) for x in parts])
        except ValueError as exc:
            raise BundleError(f"features.tsv:{lineno}: {exc}") from None
    if not rows:
        raise BundleError("features.tsv: no rows")
    features = np.asarray(rows, dtype=np.float64)
    n = features.shape[0]

    edge_rows = []
    for lineno, line in enumerate(edge_file.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise BundleError(f"edges.tsv:{lineno}: expected 2 fields, got {len(parts)}")
        try:
            u, v = int(parts[0]), int(parts[1])
        except ValueError as exc:
            raise BundleError(f"edges.tsv:{lineno}: {exc}") from None
        if u == v:
            raise BundleError(f"edges.tsv:{lineno}: self-loop {u}")
        if not (0 <= u < n and 0 <= v < n):
            raise BundleError(f"edges.tsv:{lineno}: node id out of range for n={n}")
        edge_rows.append((u, v))
    edges = np.asarray(edge_rows, dtype=np.int64).reshape(-1, 2)

    labels = None
    label_file = path / "labels.tsv"
    if label_file.is_file():
        vals = []
        for lineno, line in enumerate(label_file.read_text(encoding="utf-8").splitlines(), 1):
            try:
                vals.append(int(line))
            except ValueError as exc:
                raise BundleError(f"labels.tsv:{lineno}: {exc}") from None
        if len(vals) != n:
            raise BundleError(f"labels.tsv: {len(vals)} labels for {n} nodes")
        labels = np.asarray(vals, dtype=np.int64)

    return make_graph(n, edges, features, labels)


def save_graph_bundle(graph: Graph, path) -> None:
    """Write a bundle that round-trips through load_graph_bundle."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    edge_lines = [f"{u}\t{v}" for u, v in graph.edges]
    (path / "edges.tsv").write_text("\n".join(edge_lines) + ("\n" if edge_lines else ""),
                                    encoding="utf-8")
    feat_lines = ["\t".join(repr(float(x)) for x in row) for row in graph.features]
    (path / "features.tsv").write_text("\n".join(feat_lines) + "\n", encoding="utf-8")
    if graph.labels is not None:
        (path / "labels.tsv").write_text(
            "\n".join(str(int(c)) for c in graph.labels) + "\n", encoding="utf-8")


@dataclass(frozen=True)
class SbmConfig:
    """Stochastic block model: per-block sizes, edge probabilities, features.

    Features are a one-hot block indicator in the first ``blocks`` columns,
    padded to ``feature_dim``, plus N(0, noise_sigma^2) noise everywhere.
    """

    sizes: tuple[int, ...]
    p_in: float
    p_out: float
    feature_dim: int
    noise_sigma: float = 0.0

    @property
    def blocks(self) -> int:
        return len(self.sizes)

    @property
    def n(self) -> int:
        return int(sum(self.sizes))

    def __post_init__(self):
        if not self.sizes or any(s < 1 for s in self.sizes):
            raise ValueError("sizes must be positive")
        if not (0.0 <= self.p_out <= self.p_in <= 1.0):
            raise ValueError("need 0 <= p_out <= p_in <= 1")
        if self.feature_dim < self.blocks:
            raise ValueError("feature_dim must cover the one-hot block indicator")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be nonnegative")


def generate_sbm(config: SbmConfig, seed) -> Graph:
    """Sample a two-level stochastic block model graph.

    Each within-block pair is an edge with probability p_in, each
    cross-block pair with probability p_out. Labels are block ids.
    """
    rng = _rng(seed)
    sizes = np.asarray(config.sizes, dtype=np.int64)
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    n = int(offsets[-1])
    blocks = config.blocks

    edge_parts = []
    for a in range(blocks):
        for b in range(a, blocks):
            p = config.p_in if a == b else config.p_out
            na, nb = int(sizes[a]), int(sizes[b])
            draw = rng.random((na, nb))
            if a == b:
                iu, iv = np.triu_indices(na, k=1)
                hit = draw[iu, iv] < p
                u = iu[hit] + offsets[a]
                v = iv[hit] + offsets[a]
            else:
                iu, iv = np.nonzero(draw < p)
                u = iu + offsets[a]
                v = iv + offsets[b]
            if u.size:
                edge_parts.append(np.stack([u, v], axis=1))
    edges = (np.concatenate(edge_parts, axis=0) if edge_parts
             else np.zeros((0, 2), dtype=np.int64))

    labels = np.repeat(np.arange(blocks, dtype=np.int64), sizes)
    features = np.zeros((n, config.feature_dim), dtype=np.float64)
    features[np.arange(n), labels] = 1.0
    if config.noise_sigma > 0:
        features = features + config.noise_sigma * rng.standard_normal((n, config.feature_dim))
    return make_graph(n, edges, features, labels)


def random_walk(graph: Graph, start: int, length: int, seed=None,
                rng: np.random.Generator | None = None) -> np.ndarray:
    """Uniform random walk of ``length`` steps; returns length+1 node ids.

    A node without neighbors repeats itself, so the walk always has full
    length.
    """
    if not (0 <= start < graph.n):
        raise ValueError("start node out of range")
    if length < 0:
        raise ValueError("length must be nonnegative")
    gen = rng if rng is not None else _rng(seed)
    seq = np.empty(length + 1, dtype=np.int64)
    seq[0] = start
    cur = start
    indptr, indices = graph.indptr, graph.indices
    for t in range(1, length + 1):
        lo, hi = indptr[cur], indptr[cur + 1]
        if hi > lo:
            cur = int(indices[lo + gen.integers(hi - lo)])
        seq[t] = cur
    return seq


def k_hop_set(graph: Graph, center: int, k: int) -> np.ndarray:
    """Sorted node ids within k hops of center (center included)."""
    if not (0 <= center < graph.n):
        raise ValueError("center node out of range")
    if k < 0:
        raise ValueError("k must be nonnegative")
    seen = np.zeros(graph.n, dtype=bool)
    seen[center] = True
    frontier = [center]
    for _ in range(k):
        nxt = []
        for v in frontier:
            for w in graph.neighbors(v):
                if not seen[w]:
                    seen[w] = True
                    nxt.append(int(w))
        if not nxt:
            break
        frontier = nxt
    return np.nonzero(seen)[0].astype(np.int64)
