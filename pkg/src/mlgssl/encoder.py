"""Two-layer graph convolution encoder with an MLP projection head.

Forward pass, per view with features X and normalized adjacency Ahat:

    Z1 = Ahat (X W1)      H1 = prelu(Z1; a1)
    Z2 = Ahat (H1 W2)     H_enc = prelu(Z2; a2)
    Z3 = H_enc P1 + b1    H_proj = elu(Z3) P2 + b2

Ahat = D^-1/2 (A + I) D^-1/2 with degrees taken after adding self-loops;
it is treated as a constant (no gradient through the normalization).
Each PReLU layer has one shared scalar slope. Gradients are exact and
analytic: ``backprop`` consumes d L / d H_proj and returns d L / d param
for every parameter tensor, including the PReLU slopes.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp


class NonFiniteError(RuntimeError):
    """A loss or gradient stopped being finite; the run must abort."""


PARAM_KEYS = ("W1", "a1", "W2", "a2", "P1", "b1", "P2", "b2")


@dataclass(frozen=True)
class EncoderDims:
    hidden1: int = 256
    hidden2: int = 256
    proj_hidden: int = 256
    proj_out: int = 128

    def __post_init__(self):
        if min(self.hidden1, self.hidden2, self.proj_hidden, self.proj_out) < 1:
            raise ValueError("all layer widths must be positive")


@dataclass(frozen=True)
class EncoderParams:
    """All trainable tensors. PReLU slopes are 0-d arrays."""

    W1: np.ndarray
    a1: np.ndarray
    W2: np.ndarray
    a2: np.ndarray
    P1: np.ndarray
    b1: np.ndarray
    P2: np.ndarray
    b2: np.ndarray

    def to_dict(self) -> dict[str, np.ndarray]:
        return {k: getattr(self, k) for k in PARAM_KEYS}

    @staticmethod
    def from_dict(d: dict[str, np.ndarray]) -> "EncoderParams":
        return EncoderParams(**{k: np.asarray(d[k], dtype=np.float64) for k in PARAM_KEYS})


def init_encoder(num_features: int, dims: EncoderDims = EncoderDims(), seed=0) -> EncoderParams:
    """Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) weights, zero biases, 0.25 slopes."""
    rng = np.random.default_rng(seed)

    def uniform(fan_in, shape):
        bound = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=shape)

    W1 = uniform(num_features, (num_features, dims.hidden1))
    W2 = uniform(dims.hidden1, (dims.hidden1, dims.hidden2))
    P1 = uniform(dims.hidden2, (dims.hidden2, dims.proj_hidden))
    P2 = uniform(dims.proj_hidden, (dims.proj_hidden, dims.proj_out))
    return EncoderParams(
        W1=W1, a1=np.float64(0.25) * np.ones(()),
        W2=W2, a2=np.float64(0.25) * np.ones(()),
        P1=P1, b1=np.zeros(dims.proj_hidden),
        P2=P2, b2=np.zeros(dims.proj_out))


def normalized_adjacency(view) -> sp.csr_matrix:
    """Symmetric degree-normalized adjacency with self-loops, as CSR."""
    n = view.n
    e = view.edges
    row = np.concatenate([e[:, 0], e[:, 1], np.arange(n)])
    col = np.concatenate([e[:, 1], e[:, 0], np.arange(n)])
    deg = np.bincount(row, minlength=n).astype(np.float64)
    dinv = 1.0 / np.sqrt(deg)
    data = dinv[row] * dinv[col]
    return sp.coo_matrix((data, (row, col)), shape=(n, n)).tocsr()


def _prelu(z: np.ndarray, a: np.ndarray) -> np.ndarray:
    return np.where(z > 0, z, a * z)


def _elu(z: np.ndarray) -> np.ndarray:
    # exp only on the nonpositive branch so large activations cannot overflow
    ez = np.exp(np.minimum(z, 0.0))
    return np.where(z > 0, z, ez - 1.0)


@dataclass
class ForwardCache:
    ahat: sp.csr_matrix
    x: np.ndarray
    z1: np.ndarray
    h1: np.ndarray
    z2: np.ndarray
    h_enc: np.ndarray
    z3: np.ndarray
    a3: np.ndarray


def encode(params: EncoderParams, view) -> tuple[np.ndarray, np.ndarray, ForwardCache]:
    """Run the forward pass; returns (H_enc, H_proj, cache for backprop)."""
    ahat = normalized_adjacency(view)
    x = view.features
    z1 = ahat @ (x @ params.W1)
    h1 = _prelu(z1, params.a1)
    z2 = ahat @ (h1 @ params.W2)
    h_enc = _prelu(z2, params.a2)
    z3 = h_enc @ params.P1 + params.b1
    a3 = _elu(z3)
    h_proj = a3 @ params.P2 + params.b2
    cache = ForwardCache(ahat=ahat, x=x, z1=z1, h1=h1, z2=z2,
                         h_enc=h_enc, z3=z3, a3=a3)
    return h_enc, h_proj, cache


def backprop(params: EncoderParams, cache: ForwardCache,
             d_proj: np.ndarray) -> dict[str, np.ndarray]:
    """Exact parameter gradients for a view, given d L / d H_proj.

    Ahat is symmetric, so its transpose in the chain rule is itself.
    PReLU: df/dz = 1 if z > 0 else a; df/da = 0 if z > 0 else z.
    ELU:   df/dz = 1 if z > 0 else exp(z).
    """
    dP2 = cache.a3.T @ d_proj
    db2 = d_proj.sum(axis=0)
    dA3 = d_proj @ params.P2.T

    ez3 = np.exp(np.minimum(cache.z3, 0.0))
    dZ3 = dA3 * np.where(cache.z3 > 0, 1.0, ez3)
    dP1 = cache.h_enc.T @ dZ3
    db1 = dZ3.sum(axis=0)
    dHenc = dZ3 @ params.P1.T

    dZ2 = dHenc * np.where(cache.z2 > 0, 1.0, params.a2)
    da2 = np.sum(dHenc * np.where(cache.z2 > 0, 0.0, cache.z2)) * np.ones(())
    dM2 = cache.ahat @ dZ2
    dW2 = cache.h1.T @ dM2
    dH1 = dM2 @ params.W2.T

    dZ1 = dH1 * np.where(cache.z1 > 0, 1.0, params.a1)
    da1 = np.sum(dH1 * np.where(cache.z1 > 0, 0.0, cache.z1)) * np.ones(())
    dM1 = cache.ahat @ dZ1
    dW1 = cache.x.T @ dM1

    return {"W1": dW1, "a1": da1, "W2": dW2, "a2": da2,
            "P1": dP1, "b1": db1, "P2": dP2, "b2": db2}


def accumulate_grads(*grad_dicts: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    """Sum per-parameter gradients from several views."""
    out = {k: np.zeros_like(grad_dicts[0][k]) for k in PARAM_KEYS}
    for g in grad_dicts:
        for k in PARAM_KEYS:
            out[k] = out[k] + g[k]
    return out


@dataclass
class AdamState:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def init_adam(params: EncoderParams, lr: float = 0.001) -> AdamState:
    state = AdamState(lr=lr)
    for k, p in params.to_dict().items():
        state.m[k] = np.zeros_like(p)
        state.v[k] = np.zeros_like(p)
    return state


def adam_step(params: EncoderParams, grads: dict[str, np.ndarray],
              state: AdamState) -> tuple[EncoderParams, AdamState]:
    """One bias-corrected Adam update. Aborts on a non-finite gradient."""
    t = state.t + 1
    new_m, new_v, new_p = {}, {}, {}
    pd = params.to_dict()
    for k in PARAM_KEYS:
        g = np.asarray(grads[k], dtype=np.float64)
        if not np.all(np.isfinite(g)):
            raise NonFiniteError(f"non-finite gradient for parameter {k} at step {t}")
        m = state.beta1 * state.m[k] + (1.0 - state.beta1) * g
        v = state.beta2 * state.v[k] + (1.0 - state.beta2) * g * g
        mhat = m / (1.0 - state.beta1 ** t)
        vhat = v / (1.0 - state.beta2 ** t)
        new_m[k] = m
        new_v[k] = v
        new_p[k] = pd[k] - state.lr * mhat / (np.sqrt(vhat) + state.eps)
    new_state = AdamState(lr=state.lr, beta1=state.beta1, beta2=state.beta2,
                          eps=state.eps, t=t, m=new_m, v=new_v)
    return EncoderParams.from_dict(new_p), new_state


CHECKPOINT_VERSION = 1


def save_checkpoint(params: EncoderParams, path) -> None:
    """Write all parameter tensors to a versioned npz container."""
    arrays = {k: np.asarray(v) for k, v in params.to_dict().items()}
    arrays["format_version"] = np.int64(CHECKPOINT_VERSION)
    with open(path, "wb") as f:
        np.savez(f, **arrays)


def load_checkpoint(path) -> EncoderParams:
    with np.load(path) as data:
        version = int(data["format_version"])
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        missing = [k for k in PARAM_KEYS if k not in data]
        if missing:
            raise ValueError(f"checkpoint missing tensors: {missing}")
        return EncoderParams.from_dict({k: data[k] for k in PARAM_KEYS})
