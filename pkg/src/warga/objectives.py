"""Scalar losses and their gradients."""
from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np
import scipy.sparse as sp

from .linalg import NumericError, ShapeError
from .models import CriticParams, critic_backward, critic_forward

LOG_CLAMP = 1e-12


@dataclass(frozen=True)
class PriorSpec:
    dim: int
    distribution: str = "standard_normal"

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("prior dimension must be >= 1")
        if self.distribution != "standard_normal":
            raise ValueError(f"unsupported prior {self.distribution!r}")


@dataclass(frozen=True)
class LossBreakdown:
    reconstruction: float
    regularizer: float
    total: float


@dataclass(frozen=True)
class ReconWeighting:
    pos_weight: float = 1.0
    norm: float = 1.0
    include_diagonal: bool = True


def recon_target(adj: sp.spmatrix, include_diagonal: bool = True) -> np.ndarray:
    t = np.asarray(adj.toarray(), dtype=np.float64)
    if include_diagonal:
        np.fill_diagonal(t, 1.0)
    return t


def recon_weighting(adj: sp.spmatrix, weighted: bool = True,
                    include_diagonal: bool = True) -> ReconWeighting:
    """pos_weight = negatives/positives, norm = pairs / (2 * negatives) over the counted pairs."""
    if not weighted:
        return ReconWeighting(include_diagonal=include_diagonal)
    n = adj.shape[0]
    pairs = n * n if include_diagonal else n * (n - 1)
    pos = adj.nnz + (n if include_diagonal else 0)
    neg = pairs - pos
    if pos == 0 or neg == 0:
        return ReconWeighting(include_diagonal=include_diagonal)
    return ReconWeighting(neg / pos, pairs / (2.0 * neg), include_diagonal)


def recon_loss(logits: np.ndarray, target: np.ndarray, weighting: ReconWeighting = ReconWeighting()):
    """Weighted mean binary cross-entropy over node pairs. Returns (loss, dloss/dlogits).

    ``target`` is the dense 0/1 reconstruction target (see :func:`recon_target`).
    With ``include_diagonal=False`` the N self-pairs are left out of the mean.
    """
    if logits.shape != target.shape:
        raise ShapeError(f"logits {logits.shape} vs target {target.shape}")
    if not np.all(np.isfinite(logits)):
        raise NumericError("non-finite logits in reconstruction loss")
    n = logits.shape[0]
    count = n * n if weighting.include_diagonal else n * (n - 1)
    grad = np.empty_like(logits, dtype=np.float64)
    row_sums = _recon_kernel(np.ascontiguousarray(logits, dtype=np.float64),
                             np.ascontiguousarray(target, dtype=np.float64),
                             float(weighting.pos_weight), weighting.norm / count,
                             weighting.include_diagonal, grad)
    return weighting.norm * float(row_sums.sum()) / count, grad


@numba.njit(cache=True)
def _recon_kernel(logits, target, pw, scale, include_diagonal, grad):
    # -log(1 - s(x)) = softplus(x),  -log s(x) = softplus(x) - x
    n, m = logits.shape
    rows = np.zeros(n)
    for i in range(n):
        acc = 0.0
        for j in range(m):
            if i == j and not include_diagonal:
                grad[i, j] = 0.0
                continue
            x = logits[i, j]
            t = target[i, j]
            e = np.exp(-abs(x))
            sp_x = max(x, 0.0) + np.log1p(e)
            s = 1.0 / (1.0 + e) if x >= 0 else e / (1.0 + e)
            acc += pw * t * (sp_x - x) + (1.0 - t) * sp_x
            grad[i, j] = (pw * t * (s - 1.0) + (1.0 - t) * s) * scale
        rows[i] = acc
    return rows


def kl_standard_normal(mu: np.ndarray, logvar: np.ndarray):
    """KL(N(mu, exp(logvar)) || N(0, I)) summed over dims, averaged over nodes.

    Returns (kl, dkl/dmu, dkl/dlogvar).
    """
    if mu.shape != logvar.shape:
        raise ShapeError(f"mu {mu.shape} vs logvar {logvar.shape}")
    n = mu.shape[0]
    ev = np.exp(logvar)
    kl = -0.5 * float(np.sum(1.0 + logvar - mu * mu - ev)) / n
    return kl, mu / n, 0.5 * (ev - 1.0) / n


def adversarial_losses(real_prob: np.ndarray, fake_prob: np.ndarray):
    """Discriminator and non-saturating generator losses from discriminator outputs.

    Returns ``(d_loss, g_loss, grads)`` where grads holds d(d_loss)/d(real),
    d(d_loss)/d(fake) and d(g_loss)/d(fake). Probabilities are clamped to
    [1e-12, 1 - 1e-12] before the log; the gradient is zero where clamping bites.
    """
    r = np.asarray(real_prob, dtype=np.float64)
    f = np.asarray(fake_prob, dtype=np.float64)
    rc = np.clip(r, LOG_CLAMP, 1.0 - LOG_CLAMP)
    fc = np.clip(f, LOG_CLAMP, 1.0 - LOG_CLAMP)
    r_in = (r == rc).astype(np.float64)
    f_in = (f == fc).astype(np.float64)
    d_loss = -float(np.mean(np.log(rc))) - float(np.mean(np.log(1.0 - fc)))
    g_loss = -float(np.mean(np.log(fc)))
    grads = {
        "d_real": -r_in / (r.size * rc),
        "d_fake": f_in / (f.size * (1.0 - fc)),
        "g_fake": -f_in / (f.size * fc),
    }
    return d_loss, g_loss, grads


def wasserstein_dual_objective(r_batch: np.ndarray, z_batch: np.ndarray, critic: CriticParams):
    """mean f(r) - mean f(z) with gradients w.r.t. the critic and the embedding batch.

    Returns ``(value, dvalue/dcritic, dvalue/dz_batch)``. The critic ascends the
    value; the generator descends it through ``z_batch`` only.
    """
    if r_batch.shape != z_batch.shape:
        raise ShapeError(f"prior batch {r_batch.shape} vs embedding batch {z_batch.shape}")
    m = r_batch.shape[0]
    fr, cache_r = critic_forward(r_batch, critic)
    fz, cache_z = critic_forward(z_batch, critic)
    value = float(np.mean(fr) - np.mean(fz))
    g_r, _ = critic_backward(cache_r, np.full(m, 1.0 / m))
    g_z, dz = critic_backward(cache_z, np.full(m, -1.0 / m))
    grads = {k: g_r[k] + g_z[k] for k in g_r}
    return value, grads, dz


def warga_total_loss(recon: float, fake_scores_mean: float, lam: float = 1.0) -> LossBreakdown:
    """Generator loss: recon - lam * mean f(z). E[f(r)] is constant in the encoder weights."""
    reg = -lam * fake_scores_mean if lam != 0 else 0.0
    total = recon + reg
    if not np.isfinite(total):
        raise NumericError("non-finite total loss")
    return LossBreakdown(recon, reg, total)


def w1_empirical_1d(a, b) -> float:
    """Exact 1-Wasserstein distance between two equal-size 1-D empirical samples."""
    a = np.sort(np.asarray(a, dtype=np.float64).ravel())
    b = np.sort(np.asarray(b, dtype=np.float64).ravel())
    if a.shape != b.shape:
        raise ShapeError(f"sample counts differ: {a.size} vs {b.size}")
    return float(np.mean(np.abs(a - b)))
