"""Training loops: WARGA (clipped Wasserstein critic) and the GAE/VGAE/ARGA/ARVGA baselines."""
from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .evaluation import auc, average_precision, score_edges
from .graph import EdgeSplit, Graph, normalize, row_normalize
from .linalg import AdamState, adam_step, gemm, make_rng, spmm
from .models import (
    CriticParams,
    clip_params,
    critic_backward,
    critic_forward,
    decode_logits,
    decode_logits_backward,
    discriminator_backward,
    discriminator_forward,
    gcn_backward,
    gcn_forward,
    init_critic,
    init_discriminator,
    init_encoder,
    init_variational_encoder,
    variational_backward,
    variational_forward,
)
from .objectives import (
    LossBreakdown,
    PriorSpec,
    adversarial_losses,
    kl_standard_normal,
    recon_loss,
    recon_target,
    recon_weighting,
    wasserstein_dual_objective,
    warga_total_loss,
)

log = logging.getLogger(__name__)

MODELS = ("warga", "gae", "vgae", "arga", "arvga")


class TrainingError(RuntimeError):
    def __init__(self, epoch: int, term: str, value=None):
        super().__init__(f"epoch {epoch}: non-finite {term} ({value})")
        self.epoch = epoch
        self.term = term


@dataclass
class TrainConfig:
    model: str = "warga"
    epochs: int = 200
    critic_iters: int = 5
    batch_size: int | None = None       # None: full batch (m = N)
    hidden: int = 32
    embed: int = 16
    critic_hidden: tuple[int, int] = (16, 64)
    lr_encoder: float = 1e-3
    lr_critic: float = 1e-3
    clip: float = 0.01
    lam: float = 1.0
    seed: int = 0
    final_activation: str = "relu"
    weighted_recon: bool = True
    include_diagonal: bool = True
    normalize_features: bool = False
    kl_weight: float | None = None       # None: 1/N
    fixed_logvar: float | None = None    # test hook: overrides the logvar head output
    eval_every: int = 10

    def __post_init__(self):
        self.critic_hidden = tuple(self.critic_hidden)
        if self.model not in MODELS:
            raise ValueError(f"model must be one of {MODELS}, got {self.model!r}")
        if self.epochs < 1 or self.critic_iters < 1:
            raise ValueError("epochs and critic_iters must be >= 1")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if min(self.hidden, self.embed, *self.critic_hidden) < 1:
            raise ValueError("layer widths must be >= 1")
        if self.lr_encoder <= 0 or self.lr_critic <= 0 or self.clip <= 0:
            raise ValueError("learning rates and clip bound must be positive")
        if self.final_activation not in ("relu", "linear"):
            raise ValueError("final_activation must be relu or linear")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["critic_hidden"] = list(self.critic_hidden)
        return d


@dataclass
class TrainReport:
    config: TrainConfig
    losses: list[LossBreakdown] = field(default_factory=list)
    val_auc: list[float | None] = field(default_factory=list)
    val_ap: list[float | None] = field(default_factory=list)
    dual_estimates: list[float] = field(default_factory=list)
    seconds: float = 0.0
    embedding: np.ndarray | None = None
    params: dict = field(default_factory=dict)
    critic_steps: int = 0
    generator_steps: int = 0
    disc_prob_range: tuple[float, float] | None = None


def sample_prior_batch(spec: PriorSpec, m: int, rng) -> np.ndarray:
    return rng.standard_normal((m, spec.dim))


def _batch_rows(n: int, m: int | None, rng) -> np.ndarray | None:
    if m is None or m == n:
        return None
    return rng.integers(0, n, size=m)


def sample_embedding_batch(z: np.ndarray, m: int, rng) -> np.ndarray:
    """m rows of z drawn uniformly with replacement; the whole of z when m == N."""
    if m < 1:
        raise ValueError("batch size must be >= 1")
    idx = _batch_rows(z.shape[0], m, rng)
    return z if idx is None else z[idx]


def link_metrics(z, pos, neg) -> dict[str, float]:
    scored = score_edges(z, pos, neg)
    return {"auc": auc(scored), "ap": average_precision(scored)}


def _check(epoch: int, term: str, value) -> None:
    if not np.all(np.isfinite(value)):
        raise TrainingError(epoch, term, value)


class _Optim:
    """One Adam state per named tensor."""

    def __init__(self, params, lr: float):
        self.states = {k: AdamState(v.shape, lr=lr) for k, v in params.tensors().items()}

    def step(self, params, grads, sign: float = 1.0):
        for name, t in params.tensors().items():
            g = grads[name] if sign == 1.0 else sign * grads[name]
            adam_step(t, g, self.states[name])


@dataclass
class _Setup:
    a_norm: object
    x: np.ndarray
    target: np.ndarray
    weighting: object
    prior: PriorSpec
    batch: int | None


def _setup(g: Graph, split: EdgeSplit, cfg: TrainConfig) -> _Setup:
    x = row_normalize(g.features) if cfg.normalize_features else np.asarray(g.features, dtype=np.float64)
    adj = split.train_adjacency
    return _Setup(
        a_norm=normalize(adj),
        x=x,
        target=recon_target(adj, cfg.include_diagonal),
        weighting=recon_weighting(adj, cfg.weighted_recon, cfg.include_diagonal),
        prior=PriorSpec(cfg.embed),
        batch=cfg.batch_size,
    )


def _reconstruction(z, s: _Setup):
    loss, dlogits = recon_loss(decode_logits(z), s.target, s.weighting)
    return loss, decode_logits_backward(z, dlogits)


def _record_eval(report: TrainReport, epoch: int, cfg: TrainConfig, split: EdgeSplit, embed_fn):
    last = epoch == cfg.epochs - 1
    if cfg.eval_every > 0 and ((epoch + 1) % cfg.eval_every == 0 or last):
        m = link_metrics(embed_fn(), split.val_pos, split.val_neg)
        report.val_auc.append(m["auc"])
        report.val_ap.append(m["ap"])
    else:
        report.val_auc.append(None)
        report.val_ap.append(None)


def warga_generator_loss(a_norm, x, enc, critic, target, weighting, lam: float,
                         rows=None, forward=None):
    """Generator objective recon - lam * mean f(z_batch) and its encoder gradients.

    ``rows`` selects the embedding batch (None: all rows). ``forward`` may pass a
    precomputed ``(z, cache)`` from :func:`gcn_forward` at the same weights.
    """
    z, cache = forward if forward is not None else gcn_forward(a_norm, x, enc)
    recon, dlogits = recon_loss(decode_logits(z), target, weighting)
    dz = decode_logits_backward(z, dlogits)
    if lam != 0:
        zb = z if rows is None else z[rows]
        fz, ccache = critic_forward(zb, critic)
        losses = warga_total_loss(recon, float(np.mean(fz)), lam)
        _, dzb = critic_backward(ccache, np.full(zb.shape[0], -lam / zb.shape[0]))
        if rows is None:
            dz += dzb
        else:
            np.add.at(dz, rows, dzb)
    else:
        losses = warga_total_loss(recon, 0.0, 0.0)
    return losses, gcn_backward(cache, dz)


def train_warga(g: Graph, split: EdgeSplit, cfg: TrainConfig,
                on_critic_step: Callable[[int, int, CriticParams], None] | None = None) -> TrainReport:
    """Alternate K clipped critic ascent steps with one generator descent step per epoch.

    ``on_critic_step(epoch, iteration, critic)`` is called after each clip.
    """
    if cfg.model != "warga":
        raise ValueError("train_warga needs cfg.model == 'warga'")
    t0 = time.perf_counter()
    s = _setup(g, split, cfg)
    n = g.n_nodes
    rng = make_rng(cfg.seed)
    enc = init_encoder(s.x.shape[1], cfg.hidden, cfg.embed, rng, cfg.final_activation)
    critic = clip_params(init_critic(cfg.embed, *cfg.critic_hidden, rng, clip=cfg.clip))
    enc_opt = _Optim(enc, cfg.lr_encoder)
    critic_opt = _Optim(critic, cfg.lr_critic)
    m = n if s.batch is None else s.batch
    report = TrainReport(cfg)

    for epoch in range(cfg.epochs):
        z, cache = gcn_forward(s.a_norm, s.x, enc)
        _check(epoch, "embedding", z)
        dual = 0.0
        for it in range(cfg.critic_iters):
            r = sample_prior_batch(s.prior, m, rng)
            zb = sample_embedding_batch(z, m, rng)
            dual, grads, _ = wasserstein_dual_objective(r, zb, critic)
            _check(epoch, "critic objective", dual)
            critic_opt.step(critic, grads, sign=-1.0)  # ascent
            clip_params(critic)
            for t in critic.tensors().values():
                assert np.all(np.abs(t) <= cfg.clip), "critic left the clipping box"
            report.critic_steps += 1
            if on_critic_step is not None:
                on_critic_step(epoch, it, critic)
        report.dual_estimates.append(float(dual))

        idx = _batch_rows(n, m, rng) if cfg.lam != 0 else None
        losses, grads = warga_generator_loss(s.a_norm, s.x, enc, critic, s.target, s.weighting,
                                             cfg.lam, rows=idx, forward=(z, cache))
        _check(epoch, "reconstruction loss", losses.reconstruction)
        _check(epoch, "regularizer", losses.regularizer)
        _check(epoch, "generator loss", losses.total)
        enc_opt.step(enc, grads)
        report.generator_steps += 1
        report.losses.append(losses)
        _record_eval(report, epoch, cfg, split, lambda: gcn_forward(s.a_norm, s.x, enc)[0])

    report.embedding = gcn_forward(s.a_norm, s.x, enc)[0]
    report.params = {"encoder": enc, "critic": critic}
    report.seconds = time.perf_counter() - t0
    return report


def train_baseline(g: Graph, split: EdgeSplit, cfg: TrainConfig) -> TrainReport:
    """GAE (reconstruction only), VGAE (+KL), ARGA / ARVGA (+ one discriminator step per epoch)."""
    if cfg.model == "warga":
        raise ValueError("use train_warga for the warga model")
    t0 = time.perf_counter()
    s = _setup(g, split, cfg)
    n = g.n_nodes
    rng = make_rng(cfg.seed)
    variational = cfg.model in ("vgae", "arvga")
    adversarial = cfg.model in ("arga", "arvga")
    if variational:
        enc = init_variational_encoder(s.x.shape[1], cfg.hidden, cfg.embed, rng)
    else:
        enc = init_encoder(s.x.shape[1], cfg.hidden, cfg.embed, rng, cfg.final_activation)
    disc = init_discriminator(cfg.embed, *cfg.critic_hidden, rng) if adversarial else None
    enc_opt = _Optim(enc, cfg.lr_encoder)
    disc_opt = _Optim(disc, cfg.lr_critic) if adversarial else None
    kl_weight = 1.0 / n if cfg.kl_weight is None else cfg.kl_weight
    m = n if s.batch is None else s.batch
    report = TrainReport(cfg)
    lo, hi = 1.0, 0.0

    def encode(params):
        if not variational:
            z, cache = gcn_forward(s.a_norm, s.x, params)
            return z, z, cache, None, None
        mu, logvar, z, cache = variational_forward(s.a_norm, s.x, params, rng)
        if cfg.fixed_logvar is not None:
            logvar = np.full_like(logvar, cfg.fixed_logvar)
            cache["std"] = np.exp(0.5 * logvar)
            z = mu + cache["std"] * cache["eps"]
            cache["logvar_fixed"] = True
        return z, mu, cache, mu, logvar

    for epoch in range(cfg.epochs):
        z, _, cache, mu, logvar = encode(enc)
        _check(epoch, "embedding", z)

        if adversarial:
            r = sample_prior_batch(s.prior, m, rng)
            zb = sample_embedding_batch(z, m, rng)
            pr, cr = discriminator_forward(r, disc)
            pf, cf = discriminator_forward(zb, disc)
            d_loss, _, ag = adversarial_losses(pr, pf)
            _check(epoch, "discriminator loss", d_loss)
            gr, _ = discriminator_backward(cr, ag["d_real"])
            gf, _ = discriminator_backward(cf, ag["d_fake"])
            disc_opt.step(disc, {k: gr[k] + gf[k] for k in gr})
            report.critic_steps += 1
            lo, hi = min(lo, pr.min(), pf.min()), max(hi, pr.max(), pf.max())

        recon, dz = _reconstruction(z, s)
        _check(epoch, "reconstruction loss", recon)
        reg = 0.0
        dmu = dlogvar = None
        if variational:
            kl, dmu, dlogvar = kl_standard_normal(mu, logvar)
            reg += kl_weight * kl
            dmu, dlogvar = kl_weight * dmu, kl_weight * dlogvar
            if cfg.fixed_logvar is not None:
                dlogvar = None
        if adversarial and cfg.lam != 0:
            idx = _batch_rows(n, m, rng)
            zb = z if idx is None else z[idx]
            pf, cf = discriminator_forward(zb, disc)
            lo, hi = min(lo, pf.min()), max(hi, pf.max())
            _, g_loss, ag = adversarial_losses(pr, pf)
            reg += cfg.lam * g_loss
            _, dzb = discriminator_backward(cf, cfg.lam * ag["g_fake"])
            if idx is None:
                dz += dzb
            else:
                np.add.at(dz, idx, dzb)
        losses = LossBreakdown(recon, reg, recon + reg)
        _check(epoch, "generator loss", losses.total)

        if variational:
            grads = variational_backward(cache, dz, dmu, dlogvar)
            if cfg.fixed_logvar is not None:
                grads["W2_logvar"] = np.zeros_like(enc.W2_logvar)
        else:
            grads = gcn_backward(cache, dz)
        enc_opt.step(enc, grads)
        report.generator_steps += 1
        report.losses.append(losses)
        _record_eval(report, epoch, cfg, split, lambda: embed(s.a_norm, s.x, enc))

    report.embedding = embed(s.a_norm, s.x, enc)
    report.params = {"encoder": enc}
    if adversarial:
        report.params["discriminator"] = disc
        report.disc_prob_range = (float(lo), float(hi))
    report.seconds = time.perf_counter() - t0
    return report


def embed(a_norm, x: np.ndarray, enc) -> np.ndarray:
    """Deterministic embedding used for scoring: Z for GCN encoders, mu for variational ones."""
    if hasattr(enc, "W2_mu"):
        h1 = np.maximum(gemm(spmm(a_norm, x), enc.W1), 0.0)
        return spmm(a_norm, gemm(h1, enc.W2_mu))
    return gcn_forward(a_norm, x, enc)[0]


def train(g: Graph, split: EdgeSplit, cfg: TrainConfig, **kw) -> TrainReport:
    if cfg.model == "warga":
        return train_warga(g, split, cfg, **kw)
    return train_baseline(g, split, cfg)
