"""Training loop: three views per epoch, multi-level samples, exact gradients.

Each epoch regenerates the stochastic views and the sample tables, scores
all anchor/sample pairs on the projection output, evaluates the configured
loss, and backpropagates the exact score gradients through the shared
encoder (the three views' parameter gradients are summed) into one Adam
step. Cluster assignments are frozen at epoch 0 on the raw features.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .augment import AugConfig, generate_views, identity_view
from .contrast import (LevelScores, MarginConfig, compute_scores,
                       embedding_gradients, linear_multilevel_loss,
                       self_weighted_multilevel_loss, self_weights,
                       single_level_loss, weighted_multilevel_loss)
from .encoder import (EncoderDims, EncoderParams, NonFiniteError, PARAM_KEYS,
                      accumulate_grads, adam_step, backprop, encode,
                      init_adam, init_encoder)
from .graph import Graph
from .sampling import (LEVELS, ClusterAssignment, build_level_samples,
                       default_cluster_count, kmeans)

VARIANTS = ("sl", "lml", "lwml", "lswml")
ABLATIONS = ("none", "no_margin", "hinge", "infonce")


@dataclass(frozen=True)
class TrainConfig:
    """Everything a run needs; the seed reproduces it bit for bit."""

    variant: str = "lswml"
    levels: tuple[str, ...] = LEVELS
    m: float = 0.15
    gamma: float = 1.5
    epochs: int = 200
    seed: int = 0
    lr: float = 0.001
    aug: AugConfig = field(default_factory=AugConfig)
    kappa: int = 2
    n1: int = 1
    n2: int = 8
    clusters: int | None = None
    graph_level_mode: str = "sample"
    dims: EncoderDims = field(default_factory=EncoderDims)
    ablation: str = "none"
    beta: dict | None = None

    def __post_init__(self):
        levels = tuple(l for l in LEVELS if l in self.levels)
        if len(levels) != len(self.levels):
            unknown = [l for l in self.levels if l not in LEVELS]
            if unknown:
                raise ValueError(f"unknown levels {unknown}")
        object.__setattr__(self, "levels", levels)
        if not levels:
            raise ValueError("need at least one level")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.ablation not in ABLATIONS:
            raise ValueError(f"unknown ablation {self.ablation!r}")
        if self.variant == "sl" and len(levels) != 1:
            raise ValueError("variant sl requires exactly one level")
        if self.ablation in ("hinge", "infonce") and self.variant != "sl":
            raise ValueError(f"ablation {self.ablation!r} only applies to variant sl")
        if self.ablation != "no_margin" and not (0.0 < self.m < 0.5):
            raise ValueError(f"margin m={self.m} outside (0, 0.5)")
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be nonnegative")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.kappa < 1 or self.n1 < 1 or self.n2 < 1:
            raise ValueError("kappa, n1, n2 must be positive")
        if "node" in levels and self.n1 != 1:
            raise ValueError("the node level pins n1 = 1")

    def margin_config(self) -> MarginConfig:
        m = 0.0 if self.ablation == "no_margin" else self.m
        return MarginConfig(m=m, gamma=self.gamma, beta=self.beta)


@dataclass
class RunLog:
    """Per-epoch records plus run-level counters.

    Each record is JSON-serializable: epoch, loss, and per-level mean
    positive/negative scores.
    """

    records: list[dict]
    wall_time: float
    fallbacks: dict[str, int]


@dataclass
class TrainResult:
    params: EncoderParams
    runlog: RunLog
    clusters: ClusterAssignment | None


def _hinge_loss(sc: LevelScores, cfg: MarginConfig):
    """Ablation baseline: mean over pairs of [s_neg - s_pos + m]_+."""
    gap = sc.s_neg[:, None, :] - sc.s_pos[:, :, None] + cfg.m
    act = (gap > 0).astype(np.float64)
    count = gap.size
    loss = float(np.maximum(gap, 0.0).sum() / count)
    d_pos = -act.sum(axis=2) / count
    d_neg = act.sum(axis=1) / count
    return loss, d_pos, d_neg


def _infonce_loss(sc: LevelScores, cfg: MarginConfig):
    """Ablation baseline: softmax cross-entropy over the same score tables,
    one row per positive pair, logits gamma * score (temperature 1/gamma)."""
    g = cfg.gamma
    n, n1 = sc.s_pos.shape
    n2 = sc.s_neg.shape[1]
    logits = np.concatenate(
        [g * sc.s_pos[:, :, None],
         np.broadcast_to(g * sc.s_neg[:, None, :], (n, n1, n2))], axis=2)
    M = logits.max(axis=2, keepdims=True)
    ex = np.exp(logits - M)
    denom = ex.sum(axis=2, keepdims=True)
    loss = float(np.mean(M[..., 0] + np.log(denom[..., 0]) - logits[..., 0]))
    P = ex / denom
    scale = 1.0 / (n * n1)
    d_pos = g * (P[..., 0] - 1.0) * scale
    d_neg = g * P[..., 1:].sum(axis=1) * scale
    return loss, d_pos, d_neg


def loss_and_score_grads(scores: dict[str, LevelScores], config: TrainConfig,
                         mcfg: MarginConfig | None = None, lwml_alphas=None):
    """Dispatch to the configured objective; returns (loss, {level: (d_pos, d_neg)}).

    lwml derives its weights from the current score tables and holds them
    constant through the gradient; lwml_alphas substitutes a precomputed
    (a_pos, a_neg) pair so finite-difference probes can keep the weights
    frozen while the scores move.
    """
    mcfg = mcfg or config.margin_config()
    if config.ablation == "hinge":
        level = config.levels[0]
        loss, dp, dn = _hinge_loss(scores[level], mcfg)
        return loss, {level: (dp, dn)}
    if config.ablation == "infonce":
        level = config.levels[0]
        loss, dp, dn = _infonce_loss(scores[level], mcfg)
        return loss, {level: (dp, dn)}
    if config.variant == "sl":
        level = config.levels[0]
        loss, dp, dn = single_level_loss(scores[level], mcfg)
        return loss, {level: (dp, dn)}
    if config.variant == "lml":
        return linear_multilevel_loss(scores, mcfg)
    if config.variant == "lwml":
        a_pos, a_neg = lwml_alphas if lwml_alphas is not None else self_weights(scores, mcfg)
        return weighted_multilevel_loss(scores, a_pos, a_neg, mcfg)
    return self_weighted_multilevel_loss(scores, mcfg)


def _prepare_clusters(graph: Graph, config: TrainConfig, seed) -> ClusterAssignment | None:
    if "cluster" not in config.levels:
        return None
    k = config.clusters if config.clusters is not None else default_cluster_count(graph)
    return kmeans(graph.features, k, seed)


def _epoch_samples(graph: Graph, config: TrainConfig, clusters, khop_cache, seed_seq):
    level_seeds = seed_seq.spawn(len(config.levels))
    samples = {}
    for level, ls in zip(config.levels, level_seeds):
        samples[level] = build_level_samples(
            level, graph, n1=config.n1, n2=config.n2, kappa=config.kappa,
            clusters=clusters, seed=ls, graph_level_mode=config.graph_level_mode,
            khop_cache=khop_cache)
    return samples


def train(graph: Graph, config: TrainConfig,
          epoch_hook: Callable | None = None) -> TrainResult:
    """Run the full training loop.

    epoch_hook(epoch, scores, loss), when given, is called after the loss
    of each epoch is computed and before the parameter update; it exists
    so invariants can be checked on live score tables without bloating
    the run log.
    """
    root = np.random.SeedSequence(config.seed)
    init_seed, cluster_seed, epoch_root = root.spawn(3)
    params = init_encoder(graph.num_features, config.dims, init_seed)
    state = init_adam(params, config.lr)
    clusters = _prepare_clusters(graph, config, cluster_seed)
    khop_cache: dict = {}
    mcfg = config.margin_config()
    epoch_seeds = epoch_root.spawn(config.epochs) if config.epochs else []

    records: list[dict] = []
    fallbacks = {level: 0 for level in config.levels}
    t0 = time.perf_counter()
    for epoch in range(config.epochs):
        view_seed, sample_seed = epoch_seeds[epoch].spawn(2)
        v1, v2, v3 = generate_views(graph, config.aug, view_seed)
        _, h1, c1 = encode(params, v1)
        _, h2, c2 = encode(params, v2)
        _, h3, c3 = encode(params, v3)
        samples = _epoch_samples(graph, config, clusters, khop_cache, sample_seed)
        for level, s in samples.items():
            fallbacks[level] += s.pos_fallbacks + s.neg_fallbacks
        scores = compute_scores(h1, h2, h3, samples)
        loss, dscores = loss_and_score_grads(scores, config, mcfg)
        if not np.isfinite(loss):
            raise NonFiniteError(f"non-finite loss at epoch {epoch}")
        if epoch_hook is not None:
            epoch_hook(epoch, scores, loss)
        dh1, dh2, dh3 = embedding_gradients(h1, h2, h3, scores, dscores)
        grads = accumulate_grads(backprop(params, c1, dh1),
                                 backprop(params, c2, dh2),
                                 backprop(params, c3, dh3))
        params, state = adam_step(params, grads, state)
        records.append({
            "epoch": epoch,
            "loss": loss,
            "s_pos_mean": {lvl: float(sc.s_pos.mean()) for lvl, sc in scores.items()},
            "s_neg_mean": {lvl: float(sc.s_neg.mean()) for lvl, sc in scores.items()},
        })
    wall = time.perf_counter() - t0
    return TrainResult(params=params,
                       runlog=RunLog(records=records, wall_time=wall, fallbacks=fallbacks),
                       clusters=clusters)


def clean_embeddings(graph: Graph, params: EncoderParams) -> tuple[np.ndarray, np.ndarray]:
    """Encoder and projection outputs of the clean, un-augmented graph."""
    h_enc, h_proj, _ = encode(params, identity_view(graph))
    return h_enc, h_proj


def _flatten(grads: dict[str, np.ndarray]) -> np.ndarray:
    return np.concatenate([np.asarray(grads[k], dtype=np.float64).ravel()
                           for k in PARAM_KEYS])


def _loss_for_params(params, views, samples, config, mcfg, lwml_alphas=None):
    v1, v2, v3 = views
    _, h1, c1 = encode(params, v1)
    _, h2, c2 = encode(params, v2)
    _, h3, c3 = encode(params, v3)
    scores = compute_scores(h1, h2, h3, samples)
    loss, dscores = loss_and_score_grads(scores, config, mcfg, lwml_alphas=lwml_alphas)
    return loss, (scores, dscores, (h1, h2, h3), (c1, c2, c3))


@dataclass
class GradcheckResult:
    variant: str
    max_rel_err: float
    per_param: dict[str, float]


def finite_diff_gradcheck(graph: Graph, config: TrainConfig,
                          eps: float = 1e-4) -> GradcheckResult:
    """Central finite differences vs the analytic chain, entry by entry.

    One epoch's views and samples are frozen from the config seed. The
    numeric side is a Richardson-extrapolated central difference — two
    two-point stencils at eps and eps/2, combined to cancel the eps^2
    truncation term — because a single stencil at step 1e-4 leaves
    ~5e-6 absolute noise on high-curvature entries, swamping a 1e-4
    relative target the analytic chain actually meets. The relative
    error per entry is |ga - gn| / max(1e-4, |ga| + |gn|): strict for
    O(1) entries, an absolute bound for near-zero ones. For lwml the
    weights are frozen at the unperturbed point, matching how the
    training step treats them as constants.
    """
    root = np.random.SeedSequence(config.seed)
    init_seed, cluster_seed, epoch_root = root.spawn(3)
    params = init_encoder(graph.num_features, config.dims, init_seed)
    clusters = _prepare_clusters(graph, config, cluster_seed)
    view_seed, sample_seed = epoch_root.spawn(1)[0].spawn(2)
    views = generate_views(graph, config.aug, view_seed)
    samples = _epoch_samples(graph, config, clusters, {}, sample_seed)
    mcfg = config.margin_config()

    loss, (scores, dscores, hs, caches) = _loss_for_params(params, views, samples, config, mcfg)
    alphas = None
    if config.variant == "lwml" and config.ablation not in ("hinge", "infonce"):
        alphas = self_weights(scores, mcfg)
    dh = embedding_gradients(*hs, scores, dscores)
    analytic = accumulate_grads(*[backprop(params, c, d) for c, d in zip(caches, dh)])

    pd = {k: np.asarray(v, dtype=np.float64).copy() for k, v in params.to_dict().items()}
    per_param = {}
    for key in PARAM_KEYS:
        arr = pd[key]
        ga = np.asarray(analytic[key], dtype=np.float64)
        gn = np.zeros_like(ga)
        flat = arr.reshape(-1)
        gn_flat = gn.reshape(-1)
        def central(idx, step):
            orig = flat[idx]
            flat[idx] = orig + step
            lp, _ = _loss_for_params(EncoderParams.from_dict(pd), views, samples,
                                     config, mcfg, lwml_alphas=alphas)
            flat[idx] = orig - step
            lm, _ = _loss_for_params(EncoderParams.from_dict(pd), views, samples,
                                     config, mcfg, lwml_alphas=alphas)
            flat[idx] = orig
            return (lp - lm) / (2.0 * step)

        for i in range(flat.size):
            gn_flat[i] = (4.0 * central(i, 0.5 * eps) - central(i, eps)) / 3.0
        err = np.abs(ga - gn) / np.maximum(1e-4, np.abs(ga) + np.abs(gn))
        per_param[key] = float(err.max())
    return GradcheckResult(variant=config.variant,
                           max_rel_err=max(per_param.values()),
                           per_param=per_param)


def level_gradient_cosine(graph: Graph, params: EncoderParams, config: TrainConfig,
                          seed: int, eval_epochs: int = 10) -> np.ndarray:
    """Mean pairwise cosine between per-level parameter gradients.

    For each probe epoch, fresh views and samples are drawn for all four
    levels and the single-level objective is backpropagated one level at a
    time through the given parameters; the (4, 4) matrix averages the
    cosines over probe epochs. Levels follow the canonical order.
    """
    root = np.random.SeedSequence(seed)
    cluster_seed, epoch_root = root.spawn(2)
    base = replace(config, levels=LEVELS, variant="lswml", ablation="none", n1=1)
    clusters = _prepare_clusters(graph, base, cluster_seed)
    khop_cache: dict = {}
    mcfg = base.margin_config()
    total = np.zeros((4, 4))
    counts = np.zeros((4, 4))
    for es in epoch_root.spawn(eval_epochs):
        view_seed, sample_seed = es.spawn(2)
        v1, v2, v3 = generate_views(graph, base.aug, view_seed)
        _, h1, c1 = encode(params, v1)
        _, h2, c2 = encode(params, v2)
        _, h3, c3 = encode(params, v3)
        samples = _epoch_samples(graph, base, clusters, khop_cache, sample_seed)
        scores = compute_scores(h1, h2, h3, samples)
        vecs = []
        for level in LEVELS:
            _, dp, dn = single_level_loss(scores[level], mcfg)
            dh1, dh2, dh3 = embedding_gradients(
                h1, h2, h3, {level: scores[level]}, {level: (dp, dn)})
            grads = accumulate_grads(backprop(params, c1, dh1),
                                     backprop(params, c2, dh2),
                                     backprop(params, c3, dh3))
            vecs.append(_flatten(grads))
        for a in range(4):
            for b in range(4):
                na, nb = np.linalg.norm(vecs[a]), np.linalg.norm(vecs[b])
                if na > 0 and nb > 0:
                    total[a, b] += float(vecs[a] @ vecs[b] / (na * nb))
                    counts[a, b] += 1
    with np.errstate(invalid="ignore"):
        out = np.where(counts > 0, total / np.maximum(counts, 1), 0.0)
    return out
