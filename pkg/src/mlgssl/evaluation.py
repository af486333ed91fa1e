"""Downstream evaluation: classification, clustering, link prediction.

Protocol (recorded in every metrics file): embeddings are the encoder
output of the clean graph after training; classification uses stratified
10%/90% splits with 10 resamples and a softmax-regression probe trained by
gradient descent on frozen embeddings; clustering is best-of-10 k-means by
inertia scored with NMI (arithmetic-mean normalization) and ARI; link
prediction holds out 10% of edges plus an equal number of non-edges,
retrains on the reduced graph, and ranks held-out pairs by the shifted
cosine of their endpoint embeddings (AUC with half-credit ties).
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .graph import Graph, _rng, make_graph
from .sampling import kmeans, inertia
from .trainer import TrainConfig, TrainResult, clean_embeddings, train


@dataclass(frozen=True)
class EvalConfig:
    train_frac: float = 0.1
    resamples: int = 10
    link_holdout: float = 0.1
    kmeans_restarts: int = 10
    seed: int = 1234

    def __post_init__(self):
        if not (0.0 < self.train_frac < 1.0):
            raise ValueError("train_frac outside (0, 1)")
        if not (0.0 < self.link_holdout < 1.0):
            raise ValueError("link_holdout outside (0, 1)")
        if self.resamples < 1 or self.kmeans_restarts < 1:
            raise ValueError("resamples and kmeans_restarts must be positive")

    def protocol(self) -> dict:
        return {
            "train_frac": self.train_frac,
            "resamples": self.resamples,
            "link_holdout": self.link_holdout,
            "kmeans_restarts": self.kmeans_restarts,
            "eval_seed": self.seed,
            "embedding": "encoder output of the clean graph",
            "average": "mean of acc_mean, nmi, ari, auc over available metrics",
        }


# ---------------------------------------------------------------- primitives

def nmi(a, b) -> float:
    """Normalized mutual information with arithmetic-mean normalization.

    Returns 0 when either partition carries no information (single block).
    """
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("label vectors must be 1-d and equal length")
    n = a.size
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    ka, kb = ai.max() + 1, bi.max() + 1
    cont = np.zeros((ka, kb))
    np.add.at(cont, (ai, bi), 1.0)
    pa = cont.sum(axis=1) / n
    pb = cont.sum(axis=0) / n
    pij = cont / n
    outer = pa[:, None] * pb[None, :]
    mask = pij > 0
    mi = float((pij[mask] * np.log(pij[mask] / outer[mask])).sum())
    ha = float(-(pa[pa > 0] * np.log(pa[pa > 0])).sum())
    hb = float(-(pb[pb > 0] * np.log(pb[pb > 0])).sum())
    denom = 0.5 * (ha + hb)
    if denom <= 0:
        return 0.0
    return max(0.0, mi / denom)


def ari(a, b) -> float:
    """Adjusted Rand index; 1.0 when both partitions are identical-trivial."""
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("label vectors must be 1-d and equal length")
    n = a.size
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    cont = np.zeros((ai.max() + 1, bi.max() + 1))
    np.add.at(cont, (ai, bi), 1.0)

    def comb2(x):
        return x * (x - 1.0) / 2.0

    index = comb2(cont).sum()
    sa = comb2(cont.sum(axis=1)).sum()
    sb = comb2(cont.sum(axis=0)).sum()
    expected = sa * sb / comb2(float(n))
    maximum = 0.5 * (sa + sb)
    if maximum == expected:
        return 1.0
    return float((index - expected) / (maximum - expected))


def roc_auc(scores, labels) -> float:
    """Rank-statistic AUC; tied scores earn half credit."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be 1-d and equal length")
    npos = int(labels.sum())
    nneg = labels.size - npos
    if npos == 0 or nneg == 0:
        raise ValueError("need at least one positive and one negative")
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(scores.size)
    s_sorted = scores[order]
    i = 0
    while i < scores.size:
        j = i
        while j < scores.size and s_sorted[j] == s_sorted[i]:
            j += 1
        ranks[order[i:j]] = 0.5 * (i + 1 + j)  # average of ranks i+1..j
        i = j
    pos_ranks = ranks[labels].sum()
    return float((pos_ranks - npos * (npos + 1) / 2.0) / (npos * nneg))


# ------------------------------------------------------------------- splits

def make_classification_splits(labels, train_frac: float, resamples: int,
                               seed) -> list[tuple[np.ndarray, np.ndarray]]:
    """Stratified index splits; every class keeps at least one training node
    and, when it has more than one member, at least one test node."""
    labels = np.asarray(labels, dtype=np.int64)
    classes = np.unique(labels)
    if classes.size < 2:
        raise ValueError("classification needs at least two classes")
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    splits = []
    for sub in root.spawn(resamples):
        rng = np.random.default_rng(sub)
        train_idx, test_idx = [], []
        for c in classes:
            members = np.nonzero(labels == c)[0]
            perm = rng.permutation(members)
            if members.size == 1:
                n_tr = 1
            else:
                n_tr = int(np.ceil(train_frac * members.size))
                n_tr = max(1, min(members.size - 1, n_tr))
            train_idx.append(perm[:n_tr])
            test_idx.append(perm[n_tr:])
        splits.append((np.sort(np.concatenate(train_idx)),
                       np.sort(np.concatenate(test_idx))))
    return splits


def _softmax_probe(X_train, y_train, X_test, num_classes: int,
                   steps: int = 300, lr: float = 0.05, l2: float = 1e-4) -> np.ndarray:
    """Softmax regression on frozen features, trained by gradient descent
    (Adam) from a zero init; standardization is fit on the training rows."""
    mu = X_train.mean(axis=0)
    sd = X_train.std(axis=0)
    sd = np.where(sd > 1e-8, sd, 1.0)
    Xtr = (X_train - mu) / sd
    Xte = (X_test - mu) / sd
    n, d = Xtr.shape
    W = np.zeros((d, num_classes))
    b = np.zeros(num_classes)
    Y = np.zeros((n, num_classes))
    Y[np.arange(n), y_train] = 1.0
    mW = np.zeros_like(W); vW = np.zeros_like(W)
    mb = np.zeros_like(b); vb = np.zeros_like(b)
    b1, b2, eps = 0.9, 0.999, 1e-8
    for t in range(1, steps + 1):
        logits = Xtr @ W + b
        logits -= logits.max(axis=1, keepdims=True)
        ex = np.exp(logits)
        P = ex / ex.sum(axis=1, keepdims=True)
        gW = Xtr.T @ (P - Y) / n + l2 * W
        gb = (P - Y).sum(axis=0) / n
        mW = b1 * mW + (1 - b1) * gW; vW = b2 * vW + (1 - b2) * gW * gW
        mb = b1 * mb + (1 - b1) * gb; vb = b2 * vb + (1 - b2) * gb * gb
        W -= lr * (mW / (1 - b1 ** t)) / (np.sqrt(vW / (1 - b2 ** t)) + eps)
        b -= lr * (mb / (1 - b1 ** t)) / (np.sqrt(vb / (1 - b2 ** t)) + eps)
    return (Xte @ W + b).argmax(axis=1)


def node_classification(embeddings, labels, splits) -> tuple[float, float]:
    """Mean and std of probe accuracy over the given splits."""
    H = np.asarray(embeddings, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    classes, y = np.unique(labels, return_inverse=True)
    accs = []
    for train_idx, test_idx in splits:
        pred = _softmax_probe(H[train_idx], y[train_idx], H[test_idx], classes.size)
        accs.append(float((pred == y[test_idx]).mean()))
    return float(np.mean(accs)), float(np.std(accs))


def clustering_eval(embeddings, labels, k: int, seed,
                    restarts: int = 10) -> tuple[float, float]:
    """Best-of-``restarts`` k-means by inertia, scored against labels."""
    H = np.asarray(embeddings, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    best = None
    best_inertia = np.inf
    for sub in root.spawn(restarts):
        clu = kmeans(H, k, sub)
        w = inertia(H, clu)
        if w < best_inertia:
            best, best_inertia = clu, w
    pred = best.assign
    if np.unique(pred).size == 1:
        warnings.warn("clustering collapsed to a single cluster; NMI is 0 by definition")
    return nmi(labels, pred), ari(labels, pred)


@dataclass
class LinkSplit:
    """Edge-held-out training graph plus held-out positive and negative pairs."""

    train_graph: Graph
    pos: np.ndarray
    neg: np.ndarray


def make_link_split(graph: Graph, holdout_frac: float, seed) -> LinkSplit:
    """Remove a random edge fraction; sample an equal count of non-edges.

    Non-edges are verified against the full edge set and never duplicated.
    """
    if graph.num_edges < 2:
        raise ValueError("link split needs at least two edges")
    rng = _rng(seed)
    h = max(1, int(np.floor(graph.num_edges * holdout_frac)))
    held = rng.choice(graph.num_edges, size=h, replace=False)
    mask = np.ones(graph.num_edges, dtype=bool)
    mask[held] = False
    train_graph = make_graph(graph.n, graph.edges[mask], graph.features, graph.labels)
    pos = graph.edges[~mask]

    existing = graph.edge_set()
    chosen: set[tuple[int, int]] = set()
    tries = 0
    while len(chosen) < h:
        tries += 1
        if tries > 10000 * h:
            raise ValueError("graph too dense to sample non-edges")
        u = int(rng.integers(graph.n))
        v = int(rng.integers(graph.n))
        if u == v:
            continue
        pair = (min(u, v), max(u, v))
        if pair in existing or pair in chosen:
            continue
        chosen.add(pair)
    neg = np.asarray(sorted(chosen), dtype=np.int64)
    return LinkSplit(train_graph=train_graph, pos=pos, neg=neg)


def link_prediction(embeddings, split: LinkSplit) -> float:
    """AUC of shifted-cosine endpoint scores on held-out pairs."""
    H = np.asarray(embeddings, dtype=np.float64)

    def pair_scores(pairs):
        U = H[pairs[:, 0]]
        V = H[pairs[:, 1]]
        nu = np.linalg.norm(U, axis=1)
        nv = np.linalg.norm(V, axis=1)
        denom = nu * nv
        cos = np.divide((U * V).sum(axis=1), denom,
                        out=np.zeros(pairs.shape[0]), where=denom > 0)
        return 0.5 * (1.0 + np.clip(cos, -1.0, 1.0))

    scores = np.concatenate([pair_scores(split.pos), pair_scores(split.neg)])
    labels = np.concatenate([np.ones(split.pos.shape[0]), np.zeros(split.neg.shape[0])])
    return roc_auc(scores, labels)


# ---------------------------------------------------------------- full suite

def run_eval_suite(graph: Graph, train_config: TrainConfig,
                   eval_config: EvalConfig = EvalConfig(),
                   result: TrainResult | None = None
                   ) -> tuple[dict, TrainResult]:
    """Train (unless a result is supplied), then score all downstream tasks.

    Link prediction always retrains on the edge-held-out graph with the
    same config. Metrics missing their prerequisites (labels) come back
    None and drop out of the average.
    """
    if result is None:
        result = train(graph, train_config)
    h_enc, _ = clean_embeddings(graph, result.params)

    root = np.random.SeedSequence(eval_config.seed)
    cls_seed, clu_seed, link_seed = root.spawn(3)

    acc_mean = acc_std = nmi_val = ari_val = None
    if graph.labels is not None and np.unique(graph.labels).size >= 2:
        splits = make_classification_splits(graph.labels, eval_config.train_frac,
                                            eval_config.resamples, cls_seed)
        acc_mean, acc_std = node_classification(h_enc, graph.labels, splits)
        k = int(np.unique(graph.labels).size)
        nmi_val, ari_val = clustering_eval(h_enc, graph.labels, k, clu_seed,
                                           eval_config.kmeans_restarts)

    split = make_link_split(graph, eval_config.link_holdout, link_seed)
    link_result = train(split.train_graph, train_config)
    h_link, _ = clean_embeddings(split.train_graph, link_result.params)
    auc_val = link_prediction(h_link, split)

    available = [v for v in (acc_mean, nmi_val, ari_val, auc_val) if v is not None]
    metrics = {
        "variant": train_config.variant,
        "levels": list(train_config.levels),
        "seed": train_config.seed,
        "acc_mean": acc_mean,
        "acc_std": acc_std,
        "nmi": nmi_val,
        "ari": ari_val,
        "auc": auc_val,
        "average": float(np.mean(available)) if available else None,
        "protocol": eval_config.protocol(),
    }
    return metrics, result


def write_metrics(metrics: dict, path) -> None:
    """Deterministic metrics.json: sorted keys, two-space indent, one LF."""
    Path(path).write_text(json.dumps(metrics, sort_keys=True, indent=2) + "\n",
                          encoding="utf-8")
