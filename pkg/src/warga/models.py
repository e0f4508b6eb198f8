"""Forward and backward passes for the encoders, the decoder and the critic/discriminator MLPs.

Every ``*_forward`` returns its output together with a cache dict; the matching
``*_backward`` consumes that cache and an upstream gradient and returns exact
gradients. Embeddings are row vectors: ``Z`` is N x e and a critic batch is m x e.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .linalg import ShapeError, gemm, glorot_init, sigmoid, spmm

CHECKPOINT_FORMAT = "warga-checkpoint/1"


class _Params:
    """Mixin: named float tensors, iterated in declaration order."""

    def tensors(self) -> dict[str, np.ndarray]:
        return {f.name: getattr(self, f.name) for f in fields(self)
                if isinstance(getattr(self, f.name), np.ndarray)}

    def copy(self):
        kw = {f.name: getattr(self, f.name) for f in fields(self)}
        kw.update({k: v.copy() for k, v in self.tensors().items()})
        return type(self)(**kw)


@dataclass
class EncoderParams(_Params):
    W1: np.ndarray
    W2: np.ndarray
    final_activation: str = "relu"

    def __post_init__(self):
        if self.final_activation not in ("relu", "linear"):
            raise ValueError(f"final_activation must be relu or linear, not {self.final_activation!r}")
        if self.W1.shape[1] != self.W2.shape[0]:
            raise ShapeError(f"W1 {self.W1.shape} does not chain into W2 {self.W2.shape}")


@dataclass
class VariationalEncoderParams(_Params):
    W1: np.ndarray
    W2_mu: np.ndarray
    W2_logvar: np.ndarray


@dataclass
class CriticParams(_Params):
    W3: np.ndarray   # k x e
    b1: np.ndarray   # k
    W4: np.ndarray   # l x k
    b2: np.ndarray   # l
    W5: np.ndarray   # 1 x l
    b3: np.ndarray   # 1
    clip: float = 0.01

    def __post_init__(self):
        if self.clip <= 0:
            raise ValueError("clip bound must be positive")


@dataclass
class DiscriminatorParams(_Params):
    W3: np.ndarray
    b1: np.ndarray
    W4: np.ndarray
    b2: np.ndarray
    W5: np.ndarray
    b3: np.ndarray


def init_encoder(c: int, d: int, e: int, rng, final_activation: str = "relu") -> EncoderParams:
    w1 = glorot_init(c, d, rng)
    w2 = glorot_init(d, e, rng)
    return EncoderParams(w1, w2, final_activation)


def init_variational_encoder(c: int, d: int, e: int, rng) -> VariationalEncoderParams:
    w1 = glorot_init(c, d, rng)
    w_mu = glorot_init(d, e, rng)
    w_lv = glorot_init(d, e, rng)
    return VariationalEncoderParams(w1, w_mu, w_lv)


def _mlp_tensors(e: int, k: int, l: int, rng):
    return dict(W3=glorot_init(k, e, rng), b1=np.zeros(k),
                W4=glorot_init(l, k, rng), b2=np.zeros(l),
                W5=glorot_init(1, l, rng), b3=np.zeros(1))


def init_critic(e: int, k: int, l: int, rng, clip: float = 0.01) -> CriticParams:
    return CriticParams(**_mlp_tensors(e, k, l, rng), clip=clip)


def init_discriminator(e: int, k: int, l: int, rng) -> DiscriminatorParams:
    return DiscriminatorParams(**_mlp_tensors(e, k, l, rng))


# -- GCN generator -----------------------------------------------------------

def gcn_forward(a_norm: sp.csr_matrix, x: np.ndarray, params: EncoderParams):
    n = a_norm.shape[0]
    if a_norm.shape != (n, n) or x.shape[0] != n or x.shape[1] != params.W1.shape[0]:
        raise ShapeError(f"gcn_forward: A {a_norm.shape}, X {x.shape}, W1 {params.W1.shape}")
    ax = spmm(a_norm, x)
    h1_pre = gemm(ax, params.W1)
    h1 = np.maximum(h1_pre, 0.0)
    z_pre = spmm(a_norm, gemm(h1, params.W2))
    z = np.maximum(z_pre, 0.0) if params.final_activation == "relu" else z_pre
    cache = dict(a_norm=a_norm, ax=ax, h1_pre=h1_pre, h1=h1, z_pre=z_pre, params=params)
    return z, cache


def gcn_backward(cache, dz: np.ndarray) -> dict[str, np.ndarray]:
    p: EncoderParams = cache["params"]
    a = cache["a_norm"]
    if p.final_activation == "relu":
        dz = dz * (cache["z_pre"] > 0)
    # a_norm is symmetric, so A^T dZ == A dZ
    dp = spmm(a, dz)
    dw2 = gemm(cache["h1"].T, dp)
    dh1 = gemm(dp, p.W2.T) * (cache["h1_pre"] > 0)
    dw1 = gemm(cache["ax"].T, dh1)
    return {"W1": dw1, "W2": dw2}


def variational_forward(a_norm, x, params: VariationalEncoderParams, rng):
    """Returns (mu, logvar, z, cache) with z = mu + exp(logvar / 2) * eps."""
    n = a_norm.shape[0]
    if x.shape[0] != n or x.shape[1] != params.W1.shape[0]:
        raise ShapeError(f"variational_forward: X {x.shape}, W1 {params.W1.shape}")
    ax = spmm(a_norm, x)
    h1_pre = gemm(ax, params.W1)
    h1 = np.maximum(h1_pre, 0.0)
    mu = spmm(a_norm, gemm(h1, params.W2_mu))
    logvar = spmm(a_norm, gemm(h1, params.W2_logvar))
    eps = rng.standard_normal(mu.shape)
    std = np.exp(0.5 * logvar)
    z = mu + std * eps
    cache = dict(a_norm=a_norm, ax=ax, h1_pre=h1_pre, h1=h1, std=std, eps=eps, params=params)
    return mu, logvar, z, cache


def variational_backward(cache, dz, dmu=None, dlogvar=None) -> dict[str, np.ndarray]:
    p: VariationalEncoderParams = cache["params"]
    a = cache["a_norm"]
    dmu = dz if dmu is None else dmu + dz
    dlv = 0.5 * dz * cache["std"] * cache["eps"]
    if dlogvar is not None:
        dlv = dlv + dlogvar
    dp_mu = spmm(a, dmu)
    dp_lv = spmm(a, dlv)
    h1 = cache["h1"]
    dh1 = (gemm(dp_mu, p.W2_mu.T) + gemm(dp_lv, p.W2_logvar.T)) * (cache["h1_pre"] > 0)
    return {"W1": gemm(cache["ax"].T, dh1),
            "W2_mu": gemm(h1.T, dp_mu),
            "W2_logvar": gemm(h1.T, dp_lv)}


# -- decoder -----------------------------------------------------------------

def decode_logits(z: np.ndarray) -> np.ndarray:
    """Inner-product decoder logits Z Z^T; link probability is sigmoid of these."""
    return gemm(z, z.T)


def decode_logits_backward(z: np.ndarray, dlogits: np.ndarray) -> np.ndarray:
    return gemm(dlogits + dlogits.T, z)


# -- critic / discriminator --------------------------------------------------

def _mlp_forward(batch: np.ndarray, p):
    if batch.ndim != 2 or batch.shape[1] != p.W3.shape[1]:
        raise ShapeError(f"MLP input {batch.shape} does not match W3 {p.W3.shape}")
    h1 = sigmoid(gemm(batch, p.W3.T) + p.b1)
    h2 = sigmoid(gemm(h1, p.W4.T) + p.b2)
    out = gemm(h2, p.W5.T)[:, 0] + p.b3[0]
    return out, dict(batch=batch, h1=h1, h2=h2, params=p)


def _mlp_backward(cache, upstream: np.ndarray):
    p = cache["params"]
    h1, h2, x = cache["h1"], cache["h2"], cache["batch"]
    ds = np.asarray(upstream, dtype=np.float64).reshape(-1, 1)
    grads = {"W5": gemm(ds.T, h2), "b3": ds.sum(axis=0)}
    dh2 = gemm(ds, p.W5) * h2 * (1.0 - h2)
    grads["W4"] = gemm(dh2.T, h1)
    grads["b2"] = dh2.sum(axis=0)
    dh1 = gemm(dh2, p.W4) * h1 * (1.0 - h1)
    grads["W3"] = gemm(dh1.T, x)
    grads["b1"] = dh1.sum(axis=0)
    dx = gemm(dh1, p.W3)
    order = ("W3", "b1", "W4", "b2", "W5", "b3")
    return {k: grads[k] for k in order}, dx


def critic_forward(batch: np.ndarray, params: CriticParams):
    """f(z) = W5 s(W4 s(W3 z + b1) + b2) + b3 per row, s = logistic sigmoid."""
    return _mlp_forward(batch, params)


def critic_backward(cache, upstream: np.ndarray):
    """Gradients of sum_i upstream[i] * f(batch[i]) w.r.t. the critic tensors and the batch.

    For the mean score difference use upstream = +1/m on the prior batch and
    -1/m on the embedding batch, and add the two parameter gradients.
    """
    return _mlp_backward(cache, upstream)


def clip_params(params: CriticParams) -> CriticParams:
    c = params.clip
    for t in params.tensors().values():
        np.clip(t, -c, c, out=t)
    return params


def discriminator_forward(batch: np.ndarray, params: DiscriminatorParams):
    logits, cache = _mlp_forward(batch, params)
    prob = sigmoid(logits)
    cache["prob"] = prob
    return prob, cache


def discriminator_backward(cache, dprob: np.ndarray):
    """Chain an upstream gradient w.r.t. output probabilities through the sigmoid head."""
    prob = cache["prob"]
    return _mlp_backward(cache, np.asarray(dprob) * prob * (1.0 - prob))


def critic_lipschitz_bound(clip: float, e: int, k: int, l: int) -> float:
    """Upper bound on the critic's Lipschitz constant when every entry is in [-clip, clip].

    Product of Frobenius-norm bounds of the three weight matrices times the
    sigmoid slope bound 1/4 for each hidden layer.
    """
    return clip ** 3 * np.sqrt(k * e) * np.sqrt(l * k) * np.sqrt(l) * (0.25 ** 2)


# -- checkpoints -------------------------------------------------------------

def save_checkpoint(path, groups: dict[str, _Params], meta: dict | None = None) -> None:
    """JSON checkpoint: ``{"format", "meta", "tensors": {"group.name": {"shape", "values"}}}``."""
    tensors = {}
    for gname, params in groups.items():
        for tname, t in params.tensors().items():
            tensors[f"{gname}.{tname}"] = {"shape": list(t.shape),
                                           "values": [float(v) for v in t.reshape(-1)]}
    doc = {"format": CHECKPOINT_FORMAT, "meta": meta or {}, "tensors": tensors}
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    doc = json.loads(path.read_text(encoding="utf-8"))
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: unknown checkpoint format {doc.get('format')!r}")
    tensors = {name: np.asarray(t["values"], dtype=np.float64).reshape(t["shape"])
               for name, t in doc["tensors"].items()}
    return tensors, doc["meta"]
