"""Shifted-cosine scoring and the contrastive losses, with exact gradients.

Similarity is theta(u, v) = (1 + cos(u, v)) / 2 in [0, 1]; positives are
pushed toward 1 and negatives toward 0. With margin m in [0, 0.5) the
derived constants are

    delta_pos = 1 - m   delta_neg = m   o_pos = 1 + m   o_neg = -m

Four variants over per-level score tables s_pos (n, n1) and s_neg (n, n2):

* single level:        mean_i log(1 + sum_jk exp(gamma * (s_neg - s_pos + m)))
* linear multi-level:  the margin gap is summed over levels with weights beta
* weighted:            per-pair weights alpha scale the deviations from the
                       optima, with alpha supplied externally as constants
* self-weighted:       alpha_pos = [o_pos - s_pos]_+ and
                       alpha_neg = [s_neg - o_neg]_+ are taken from the
                       scores themselves and gradients flow through them

Every loss returns its exact analytic gradient with respect to each score
entry. All log-sum-exp reductions are max-shifted.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .sampling import LEVELS, POOLED, LevelSamples


@dataclass(frozen=True)
class MarginConfig:
    """Margin m, scale gamma, optional per-level weights beta.

    m = 0 is admitted only because the margin-free ablation needs it;
    standard training enforces m > 0 at config validation time.
    """

    m: float = 0.15
    gamma: float = 1.5
    beta: Mapping[str, float] | None = None

    def __post_init__(self):
        if not (0.0 <= self.m < 0.5):
            raise ValueError(f"margin m={self.m} outside [0, 0.5)")
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if self.beta is not None:
            for lvl, b in self.beta.items():
                if lvl not in LEVELS:
                    raise ValueError(f"unknown level {lvl!r} in beta")
                if not np.isfinite(b):
                    raise ValueError("beta weights must be finite")

    @property
    def delta_pos(self) -> float:
        return 1.0 - self.m

    @property
    def delta_neg(self) -> float:
        return self.m

    @property
    def o_pos(self) -> float:
        return 1.0 + self.m

    @property
    def o_neg(self) -> float:
        return -self.m

    def beta_for(self, level: str) -> float:
        if self.beta is None:
            return 1.0
        return float(self.beta.get(level, 1.0))


@dataclass
class LevelScores:
    """Score tables for one level plus the samples that produced them."""

    level: str
    s_pos: np.ndarray
    s_neg: np.ndarray
    samples: LevelSamples


def shifted_cosine(u: np.ndarray, v: np.ndarray) -> float:
    """theta(u, v) = (1 + cos(u, v)) / 2; a zero vector scores neutral 0.5."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        return 0.5
    cos = float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))
    return 0.5 * (1.0 + cos)


def _gather_rows(h2: np.ndarray, h3: np.ndarray, idx: np.ndarray,
                 view: np.ndarray) -> np.ndarray:
    """Sample embeddings (n, k, d) for (view, index) tables; POOLED means
    the column-mean row of that view."""
    n, k = idx.shape
    d = h2.shape[1]
    out = np.empty((n, k, d), dtype=np.float64)
    for v, h in ((2, h2), (3, h3)):
        mask = view == v
        if not np.any(mask):
            continue
        real = mask & (idx != POOLED)
        if np.any(real):
            out[real] = h[idx[real]]
        pooled = mask & (idx == POOLED)
        if np.any(pooled):
            out[pooled] = h.mean(axis=0)
    return out


def _pair_scores(U: np.ndarray, E: np.ndarray) -> np.ndarray:
    """Shifted cosine between anchor rows U (n, d) and samples E (n, k, d)."""
    un = np.linalg.norm(U, axis=1)
    en = np.linalg.norm(E, axis=2)
    dot = np.einsum("nd,nkd->nk", U, E)
    denom = un[:, None] * en
    cos = np.divide(dot, denom, out=np.zeros_like(dot), where=denom > 0)
    np.clip(cos, -1.0, 1.0, out=cos)
    return 0.5 * (1.0 + cos)


def compute_scores(h1: np.ndarray, h2: np.ndarray, h3: np.ndarray,
                   samples: Mapping[str, LevelSamples]) -> dict[str, LevelScores]:
    """Score every anchor/sample pair at every active level.

    Anchors are rows of h1; samples resolve against h2 or h3 by view id.
    """
    out: dict[str, LevelScores] = {}
    for level, s in samples.items():
        sp = _pair_scores(h1, _gather_rows(h2, h3, s.pos_idx, s.pos_view))
        sn = _pair_scores(h1, _gather_rows(h2, h3, s.neg_idx, s.neg_view))
        out[level] = LevelScores(level=level, s_pos=sp, s_neg=sn, samples=s)
    return out


def _check_shapes(scores: Mapping[str, LevelScores]) -> tuple[int, int, int]:
    if not scores:
        raise ValueError("need at least one level of scores")
    shapes = {(sc.s_pos.shape, sc.s_neg.shape) for sc in scores.values()}
    if len(shapes) != 1:
        raise ValueError("mismatched sample counts across levels")
    (ps, ns), = shapes
    return ps[0], ps[1], ns[1]


def _softplus_lse(A: np.ndarray) -> tuple[float, np.ndarray]:
    """mean_i log(1 + sum exp(A_i)) and its gradient, max-shifted.

    A has shape (n, n1, n2); the returned W is dL/dA of the same shape,
    i.e. exp(A_ijk) / (1 + sum_jk exp(A_ijk)) / n.
    """
    n = A.shape[0]
    flat = A.reshape(n, -1)
    M = np.maximum(flat.max(axis=1), 0.0)
    ex = np.exp(flat - M[:, None])
    denom = np.exp(-M) + ex.sum(axis=1)
    loss = float(np.mean(M + np.log(denom)))
    W = (ex / denom[:, None]).reshape(A.shape) / n
    return loss, W


def single_level_loss(scores: LevelScores, cfg: MarginConfig
                      ) -> tuple[float, np.ndarray, np.ndarray]:
    """Margin softplus over one level's pairs; returns (loss, d_pos, d_neg)."""
    sp, sn = scores.s_pos, scores.s_neg
    A = cfg.gamma * (sn[:, None, :] - sp[:, :, None] + cfg.m)
    loss, W = _softplus_lse(A)
    d_pos = -cfg.gamma * W.sum(axis=2)
    d_neg = cfg.gamma * W.sum(axis=1)
    return loss, d_pos, d_neg


def linear_multilevel_loss(scores: Mapping[str, LevelScores], cfg: MarginConfig
                           ) -> tuple[float, dict[str, tuple[np.ndarray, np.ndarray]]]:
    """Levels combined linearly inside the exponent with weights beta."""
    _check_shapes(scores)
    delta = None
    for level, sc in scores.items():
        b = cfg.beta_for(level)
        term = b * (sc.s_neg[:, None, :] - sc.s_pos[:, :, None] + cfg.m)
        delta = term if delta is None else delta + term
    loss, W = _softplus_lse(cfg.gamma * delta)
    grads = {}
    for level, sc in scores.items():
        b = cfg.beta_for(level)
        grads[level] = (-cfg.gamma * b * W.sum(axis=2), cfg.gamma * b * W.sum(axis=1))
    return loss, grads


def self_weights(scores: Mapping[str, LevelScores], cfg: MarginConfig
                 ) -> tuple[dict[str, np.ndarray], dict[str, np.ndarray]]:
    """Cutoff weights alpha_pos = [o_pos - s_pos]_+, alpha_neg = [s_neg - o_neg]_+."""
    a_pos = {lvl: np.maximum(cfg.o_pos - sc.s_pos, 0.0) for lvl, sc in scores.items()}
    a_neg = {lvl: np.maximum(sc.s_neg - cfg.o_neg, 0.0) for lvl, sc in scores.items()}
    return a_pos, a_neg


def weighted_multilevel_loss(scores: Mapping[str, LevelScores],
                             alpha_pos: Mapping[str, np.ndarray],
                             alpha_neg: Mapping[str, np.ndarray],
                             cfg: MarginConfig
                             ) -> tuple[float, dict[str, tuple[np.ndarray, np.ndarray]]]:
    """Externally weighted deviations; the alphas are constants, so they
    scale the gradients but receive none themselves."""
    _check_shapes(scores)
    delta = None
    for level, sc in scores.items():
        ap = np.asarray(alpha_pos[level], dtype=np.float64)
        an = np.asarray(alpha_neg[level], dtype=np.float64)
        if ap.shape != sc.s_pos.shape or an.shape != sc.s_neg.shape:
            raise ValueError(f"alpha shape mismatch at level {level!r}")
        if np.any(ap < 0) or np.any(an < 0):
            raise ValueError("negative alpha weights rejected")
        term = (an * (sc.s_neg - cfg.delta_neg))[:, None, :] \
            - (ap * (sc.s_pos - cfg.delta_pos))[:, :, None]
        delta = term if delta is None else delta + term
    loss, W = _softplus_lse(cfg.gamma * delta)
    grads = {}
    for level, sc in scores.items():
        ap = np.asarray(alpha_pos[level], dtype=np.float64)
        an = np.asarray(alpha_neg[level], dtype=np.float64)
        grads[level] = (-cfg.gamma * ap * W.sum(axis=2),
                        cfg.gamma * an * W.sum(axis=1))
    return loss, grads


def _cutoff_terms(sc: LevelScores, cfg: MarginConfig) -> tuple[np.ndarray, np.ndarray]:
    """Per-level self-weighted margin terms.

    term_neg = [s_neg - o_neg]_+ (s_neg - delta_neg)   (n, n2)
    term_pos = [o_pos - s_pos]_+ (s_pos - delta_pos)   (n, n1)

    The level's exponent contribution is term_neg - term_pos per (j, k) pair.
    """
    an = np.maximum(sc.s_neg - cfg.o_neg, 0.0)
    ap = np.maximum(cfg.o_pos - sc.s_pos, 0.0)
    return an * (sc.s_neg - cfg.delta_neg), ap * (sc.s_pos - cfg.delta_pos)


def self_weighted_exponents(scores: Mapping[str, LevelScores],
                            cfg: MarginConfig) -> np.ndarray:
    """Summed margin terms (n, n1, n2) entering exp(gamma * .) in the
    self-weighted loss. Exposed so the exponent can be cross-checked
    against the quadratic boundary residual."""
    _check_shapes(scores)
    total = None
    for level, sc in scores.items():
        tn, tp = _cutoff_terms(sc, cfg)
        term = tn[:, None, :] - tp[:, :, None]
        total = term if total is None else total + term
    return total


def self_weighted_multilevel_loss(scores: Mapping[str, LevelScores], cfg: MarginConfig
                                  ) -> tuple[float, dict[str, tuple[np.ndarray, np.ndarray]]]:
    """Self-weighted loss; gradients flow through the cutoff weights.

    With the cutoffs active (always true for scores in [0, 1]) the margin
    term per level is (s_neg + m)(s_neg - m) - (1 + m - s_pos)(s_pos - 1 + m)
    = s_neg^2 + (1 - s_pos)^2 - 2 m^2, so d/ds_neg = 2 s_neg and
    d/ds_pos = -2 (1 - s_pos); the general expressions below also cover
    inactive cutoffs, where the derivative is zero.
    """
    Z = self_weighted_exponents(scores, cfg)
    loss, W = _softplus_lse(cfg.gamma * Z)
    w_pos = W.sum(axis=2)
    w_neg = W.sum(axis=1)
    grads = {}
    for level, sc in scores.items():
        sn, sp = sc.s_neg, sc.s_pos
        d_term_neg = np.where(sn > cfg.o_neg, sn - cfg.delta_neg, 0.0) \
            + np.maximum(sn - cfg.o_neg, 0.0)
        d_term_pos = np.where(sp < cfg.o_pos, sp - cfg.delta_pos, 0.0) \
            - np.maximum(cfg.o_pos - sp, 0.0)
        grads[level] = (cfg.gamma * w_pos * d_term_pos,
                        cfg.gamma * w_neg * d_term_neg)
    return loss, grads


def boundary_residual(scores: Mapping[str, LevelScores], cfg: MarginConfig) -> np.ndarray:
    """Squared distance to the ideal point minus the decision-boundary
    radius, per (anchor, j, k) triple:

        sum_l [ s_neg_l^2 + (s_pos_l - 1)^2 ]  -  2 m^2 L

    where L is the number of active levels (so four levels give the 8 m^2
    boundary). Equals the self-weighted exponent whenever all cutoffs are
    active, which holds for scores in [0, 1].
    """
    n, n1, n2 = _check_shapes(scores)
    total = np.zeros((n, n1, n2))
    for sc in scores.values():
        total = total + (sc.s_neg ** 2)[:, None, :] + ((sc.s_pos - 1.0) ** 2)[:, :, None]
    return total - 2.0 * cfg.m ** 2 * len(scores)


def embedding_gradients(h1: np.ndarray, h2: np.ndarray, h3: np.ndarray,
                        scores: Mapping[str, LevelScores],
                        dscores: Mapping[str, tuple[np.ndarray, np.ndarray]]
                        ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Route d L / d score back to the three embedding matrices.

    For theta = (1 + cos) / 2 with anchor u and sample v:

        d theta / d u = (v_hat - cos * u_hat) / (2 |u|)
        d theta / d v = (u_hat - cos * v_hat) / (2 |v|)

    Zero-norm rows contribute nothing (their score is the constant 0.5).
    Pooled samples spread their gradient as 1/n over every row of the view.
    """
    dh1 = np.zeros_like(h1)
    dh2 = np.zeros_like(h2)
    dh3 = np.zeros_like(h3)
    un = np.linalg.norm(h1, axis=1)
    un_safe = np.where(un > 0, un, 1.0)
    U_hat = h1 / un_safe[:, None]

    for level, sc in scores.items():
        d_pos, d_neg = dscores[level]
        for idx, view, dtab in ((sc.samples.pos_idx, sc.samples.pos_view, d_pos),
                                (sc.samples.neg_idx, sc.samples.neg_view, d_neg)):
            E = _gather_rows(h2, h3, idx, view)
            en = np.linalg.norm(E, axis=2)
            en_safe = np.where(en > 0, en, 1.0)
            E_hat = E / en_safe[..., None]
            cos = np.einsum("nd,nkd->nk", U_hat, E_hat)
            np.clip(cos, -1.0, 1.0, out=cos)
            valid = (un[:, None] > 0) & (en > 0)
            coeff = np.where(valid, dtab, 0.0)

            cu = coeff / (2.0 * un_safe[:, None])
            dh1 += np.einsum("nk,nkd->nd", cu, E_hat) \
                - (cu * cos).sum(axis=1)[:, None] * U_hat

            cv = coeff / (2.0 * en_safe)
            dE = cv[..., None] * (U_hat[:, None, :] - cos[..., None] * E_hat)

            for v, dh in ((2, dh2), (3, dh3)):
                mask = view == v
                real = mask & (idx != POOLED)
                if np.any(real):
                    np.add.at(dh, idx[real], dE[real])
                pooled = mask & (idx == POOLED)
                if np.any(pooled):
                    dh += dE[pooled].sum(axis=0) / dh.shape[0]
    return dh1, dh2, dh3
