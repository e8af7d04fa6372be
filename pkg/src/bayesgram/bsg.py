"""Bayesian skip-gram model: parameters, objective, gradients, trainer.

Each word carries two Gaussians: a prior (its context-agnostic density) and
a context-output density used when the word appears as a context word. The
encoder maps a (center, context window) occurrence to a posterior Gaussian.
Training minimizes a margin loss over closed-form KL divergences between
the posterior and positive/negative context densities, plus a KL pull
toward the center word's prior. Every term is analytic, so the training
loss and its gradients never draw latent samples; randomness enters only
through subsampling and negative sampling upstream.
"""

import csv
import os
from dataclasses import dataclass, field

import numpy as np

from .corpus import Vocabulary, iter_training_windows
from .encoder import EncoderParams, init_encoder, infer_posterior, encoder_backward
from .gauss import Gaussian, kl_divergence
from .optim import Adam

__all__ = ["TrainConfig", "BsgModel", "NumericalError", "init_bsg_model",
           "reparameterize", "window_loss", "window_loss_gradients",
           "elbo_estimate", "train"]

_LOG_2PI = float(np.log(2.0 * np.pi))


class NumericalError(Exception):
    """Training produced a non-finite loss."""


@dataclass
class TrainConfig:
    dim: int = 100
    window: int = 5
    subsample_t: float = 1e-4
    negatives_per_positive: int = 1
    margin: float = 1.0
    batch_size: int = 22000          # prediction tasks (positive/negative pairs)
    learning_rate: float = 0.00055
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    epochs: int = 1
    seed: int = 0
    objective: str = "hinge"         # "hinge" or "soft"
    cov_kind: str = "spherical"      # "spherical" or "diagonal"
    hidden_dim: int = 0              # 0 -> same as dim
    neg_exponent: float = 1.0
    lowercase: bool = True
    all_pairs: bool = False          # pair every positive with every negative
    deterministic: bool = True
    param_dtype: str = "float32"     # storage; math always accumulates in 64-bit

    def __post_init__(self):
        if self.dim < 1 or self.window < 1 or self.epochs < 0:
            raise ValueError("dim/window must be >= 1 and epochs >= 0")
        if self.margin < 0:
            raise ValueError("margin must be >= 0")
        if self.objective not in ("hinge", "soft"):
            raise ValueError(f"unknown objective {self.objective!r}")
        if self.cov_kind not in ("spherical", "diagonal"):
            raise ValueError(f"unknown cov_kind {self.cov_kind!r}")

    @property
    def d_h(self) -> int:
        return self.hidden_dim if self.hidden_dim > 0 else self.dim


@dataclass
class BsgModel:
    vocab: Vocabulary
    cov_kind: str
    dim: int
    prior_mean: np.ndarray      # V x d
    prior_log_var: np.ndarray   # V (spherical) or V x d (diagonal)
    ctx_mean: np.ndarray
    ctx_log_var: np.ndarray
    enc: EncoderParams

    def prior_gaussian(self, w: int) -> Gaussian:
        return Gaussian(self.prior_mean[w], self.prior_log_var[w])

    def ctx_gaussian(self, w: int) -> Gaussian:
        return Gaussian(self.ctx_mean[w], self.ctx_log_var[w])

    def posterior(self, center: int, contexts) -> Gaussian:
        return infer_posterior(center, contexts, self.enc)

    def param_arrays(self) -> dict:
        """All trainable tensors, keyed by stable names."""
        return {
            "prior_mean": self.prior_mean, "prior_log_var": self.prior_log_var,
            "ctx_mean": self.ctx_mean, "ctx_log_var": self.ctx_log_var,
            "enc_R": self.enc.R, "enc_M": self.enc.M, "enc_U": self.enc.U,
            "enc_b1": self.enc.b1, "enc_W": self.enc.W, "enc_b2": self.enc.b2,
        }


def init_bsg_model(vocab: Vocabulary, cfg: TrainConfig,
                   rng: np.random.Generator) -> BsgModel:
    V, d = len(vocab), cfg.dim
    dtype = np.dtype(cfg.param_dtype)
    prior_mean = rng.uniform(-0.5 / d, 0.5 / d, size=(V, d)).astype(dtype)
    ctx_mean = rng.uniform(-0.5 / d, 0.5 / d, size=(V, d)).astype(dtype)
    lv_shape = (V,) if cfg.cov_kind == "spherical" else (V, d)
    enc = init_encoder(V, d, cfg.d_h, cfg.cov_kind, rng)
    for name in ("R", "M", "U", "b1", "W", "b2"):
        setattr(enc, name, getattr(enc, name).astype(dtype))
    return BsgModel(vocab=vocab, cov_kind=cfg.cov_kind, dim=d,
                    prior_mean=prior_mean,
                    prior_log_var=np.zeros(lv_shape, dtype=dtype),
                    ctx_mean=ctx_mean,
                    ctx_log_var=np.zeros(lv_shape, dtype=dtype),
                    enc=enc)


def reparameterize(g: Gaussian, eps: np.ndarray) -> np.ndarray:
    """z = mean + std * eps (the usual location-scale rewrite)."""
    eps = np.asarray(eps, dtype=np.float64)
    if eps.shape[-1] != g.dim:
        raise ValueError("dimension mismatch")
    return g.mean + g.std_vector() * eps


def _kl_parts(mu1, lv1, mu2, lv2):
    """KL of diagonal Gaussians from raw arrays, plus all partials.

    lv1/lv2 may be scalars (spherical) or vectors; gradients w.r.t. a scalar
    log-variance come back as a scalar (summed over coordinates).
    """
    d = mu1.shape[0]
    lv1v = np.broadcast_to(np.atleast_1d(lv1), (d,))
    lv2v = np.broadcast_to(np.atleast_1d(lv2), (d,))
    ratio = np.exp(lv1v - lv2v)
    dmu = mu1 - mu2
    inv2 = np.exp(-lv2v)
    val = 0.5 * np.sum(ratio + dmu * dmu * inv2 - 1.0 + lv2v - lv1v)
    g_mu1 = dmu * inv2
    g_lv1 = 0.5 * (ratio - 1.0)
    g_lv2 = 0.5 * (1.0 - ratio - dmu * dmu * inv2)
    if np.ndim(lv1) == 0:
        g_lv1 = g_lv1.sum()
    if np.ndim(lv2) == 0:
        g_lv2 = g_lv2.sum()
    return float(val), g_mu1, g_lv1, g_lv2


def _pairs(n_pos, n_neg, all_pairs):
    if all_pairs:
        return [(j, k) for j in range(n_pos) for k in range(n_neg)]
    if n_neg % n_pos != 0:
        raise ValueError("length mismatch: negatives must be a multiple of positives")
    return [(k % n_pos, k) for k in range(n_neg)]


@dataclass
class WindowGrads:
    """Gradients of one window loss, sparse over the word tables."""

    loss: float
    enc: object
    prior: dict = field(default_factory=dict)  # word id -> (d_mean, d_log_var)
    ctx: dict = field(default_factory=dict)


def _window_core(model: BsgModel, center, positives, negatives, cfg: TrainConfig,
                 want_grads: bool):
    if len(positives) == 0:
        raise ValueError("empty positives")
    if len(negatives) == 0:
        raise ValueError("length mismatch: no negatives")
    q = infer_posterior(center, positives, model.enc)
    mu_q = q.mean
    lv_q = q.log_var if q.log_var.ndim else float(q.log_var)

    spherical = model.cov_kind == "spherical"

    def table_kl(word, table_mu, table_lv):
        mu2 = np.asarray(table_mu[word], dtype=np.float64)
        lv2 = float(table_lv[word]) if spherical else np.asarray(table_lv[word],
                                                                 dtype=np.float64)
        return _kl_parts(mu_q, lv_q, mu2, lv2)

    kl_pos = [table_kl(w, model.ctx_mean, model.ctx_log_var) for w in positives]
    kl_neg = [table_kl(w, model.ctx_mean, model.ctx_log_var) for w in negatives]
    kl_prior = table_kl(center, model.prior_mean, model.prior_log_var)

    pairs = _pairs(len(positives), len(negatives), cfg.all_pairs)
    hinge = cfg.objective == "hinge"
    loss = kl_prior[0]
    pair_coef = []
    for j, k in pairs:
        arg = kl_pos[j][0] - kl_neg[k][0] + (cfg.margin if hinge else 0.0)
        if hinge:
            active = arg > 0.0
            loss += arg if active else 0.0
            pair_coef.append(1.0 if active else 0.0)
        else:
            loss += arg
            pair_coef.append(1.0)
    if not want_grads:
        return loss, None

    d_mu_q = np.zeros(model.dim)
    d_lv_q = 0.0 if q.log_var.ndim == 0 else np.zeros(model.dim)
    prior_grads, ctx_grads = {}, {}

    def add_ctx(word, parts, coef):
        _, g_mu1, g_lv1, g_lv2 = parts
        nonlocal d_mu_q, d_lv_q
        d_mu_q = d_mu_q + coef * g_mu1
        d_lv_q = d_lv_q + coef * g_lv1
        slot = ctx_grads.get(word)
        if slot is None:
            ctx_grads[word] = [-coef * g_mu1, coef * g_lv2]
        else:
            slot[0] -= coef * g_mu1
            slot[1] += coef * g_lv2

    for coef, (j, k) in zip(pair_coef, pairs):
        if coef != 0.0:
            add_ctx(positives[j], kl_pos[j], coef)
            add_ctx(negatives[k], kl_neg[k], -coef)
    # prior term (coefficient 1)
    _, g_mu1, g_lv1, g_lv2 = kl_prior
    d_mu_q = d_mu_q + g_mu1
    d_lv_q = d_lv_q + g_lv1
    prior_grads[center] = [-g_mu1, g_lv2]

    enc_grads = encoder_backward(center, positives, model.enc, d_mu_q, d_lv_q)
    return loss, WindowGrads(loss=loss, enc=enc_grads,
                             prior=prior_grads, ctx=ctx_grads)


def window_loss(model: BsgModel, center, positives, negatives,
                cfg: TrainConfig) -> float:
    """Margin (or soft) loss of one training window. See module docstring."""
    loss, _ = _window_core(model, center, positives, negatives, cfg, False)
    return loss


def window_loss_gradients(model: BsgModel, center, positives, negatives,
                          cfg: TrainConfig) -> WindowGrads:
    """Loss plus exact gradients; inactive hinge terms contribute nothing."""
    _, grads = _window_core(model, center, positives, negatives, cfg, True)
    return grads


def elbo_estimate(model: BsgModel, center, contexts, n_samples: int,
                  rng: np.random.Generator) -> float:
    """Monte-Carlo variational lower bound for one window.

    Reconstruction uses the exact softmax over the full vocabulary (scores
    are context-density log pdfs shifted by log unigram probability), so
    this is an enumeration-scale diagnostic, not a training path.
    """
    V = len(model.vocab)
    if V > 10000:
        raise ValueError("vocabulary too large to enumerate; use the training loss")
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    q = model.posterior(center, contexts)
    eps = rng.standard_normal(size=(n_samples, model.dim))
    z = q.mean + q.std_vector() * eps                     # n x d
    ctx_mu = model.ctx_mean.astype(np.float64)
    if model.cov_kind == "spherical":
        ctx_lv = np.repeat(model.ctx_log_var.astype(np.float64)[:, None],
                           model.dim, axis=1)
    else:
        ctx_lv = model.ctx_log_var.astype(np.float64)
    dz = z[:, None, :] - ctx_mu[None, :, :]
    scores = -0.5 * np.sum(_LOG_2PI + ctx_lv[None] + dz * dz / np.exp(ctx_lv)[None],
                           axis=2)
    scores = scores + np.log(model.vocab.unigram_prob)[None, :]
    m = scores.max(axis=1, keepdims=True)
    log_norm = (m + np.log(np.exp(scores - m).sum(axis=1, keepdims=True)))[:, 0]
    recon = np.zeros(n_samples)
    for c in contexts:
        recon += scores[:, c] - log_norm
    return float(recon.mean()) - kl_divergence(q, model.prior_gaussian(center))


def _zero_grad_buffers(params: dict) -> dict:
    return {k: np.zeros(v.shape, dtype=np.float64) for k, v in params.items()}


def _accumulate(buffers: dict, wg: WindowGrads):
    for w, (dmu, dlv) in wg.prior.items():
        buffers["prior_mean"][w] += dmu
        buffers["prior_log_var"][w] += dlv
    for w, (dmu, dlv) in wg.ctx.items():
        buffers["ctx_mean"][w] += dmu
        buffers["ctx_log_var"][w] += dlv
    eg = wg.enc
    buffers["enc_M"] += eg.dM
    buffers["enc_U"] += eg.dU
    buffers["enc_b1"] += eg.db1
    buffers["enc_W"] += eg.dW
    buffers["enc_b2"] += eg.db2
    R = buffers["enc_R"]
    for w, g in eg.dR.items():
        R[w] += g


class _Telemetry:
    def __init__(self, path):
        self.file = None
        if path:
            self.file = open(path, "w", newline="")
            self.writer = csv.writer(self.file)
            self.writer.writerow(["batch_index", "loss", "examples_seen"])

    def row(self, batch_index, loss, examples_seen):
        if self.file:
            self.writer.writerow([batch_index, f"{loss:.6f}", examples_seen])
            self.file.flush()

    def close(self):
        if self.file:
            self.file.close()


def _param_diagnostics(params: dict, batch_index):
    norms = {k: float(np.linalg.norm(np.asarray(v, dtype=np.float64)))
             for k, v in params.items()}
    pretty = ", ".join(f"{k}={v:.3g}" for k, v in norms.items())
    return f"batch {batch_index}; parameter norms: {pretty}"


def data_rng(cfg: TrainConfig) -> np.random.Generator:
    """The generator feeding subsampling and negative sampling.

    Seeded independently of model initialization so every model kind sees
    the identical window/negative stream for a given cfg.seed.
    """
    return np.random.default_rng([cfg.seed, 1])


def init_rng(cfg: TrainConfig) -> np.random.Generator:
    return np.random.default_rng([cfg.seed, 2])


def run_training_loop(corpus_path, vocab: Vocabulary, cfg: TrainConfig,
                      params: dict, grad_of_window, lr: float,
                      post_batch=None, log_path=None, epoch_losses=None):
    """Shared mini-batch Adam engine.

    grad_of_window(center, positives, negatives, buffers) accumulates the
    window gradient into the dense 64-bit buffers and returns the loss.
    post_batch(params), when given, runs after every optimizer step (used
    for projection/clipping). Deterministic given cfg.seed: the pipeline is
    a single sequential pass. Telemetry CSV goes to log_path or $BSG_LOG.
    """
    opt = Adam(params, lr=lr, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.adam_eps)
    telemetry = _Telemetry(log_path or os.environ.get("BSG_LOG"))
    buffers = _zero_grad_buffers(params)
    rng = data_rng(cfg)
    batch_idx = 0
    examples_seen = 0

    def apply_batch(n_windows, batch_loss):
        nonlocal batch_idx
        grads = {k: v / n_windows for k, v in buffers.items()}
        opt.step(grads)
        if post_batch is not None:
            post_batch(params)
        for v in buffers.values():
            v.fill(0.0)
        telemetry.row(batch_idx, batch_loss / n_windows, examples_seen)
        batch_idx += 1

    try:
        for _ in range(cfg.epochs):
            tasks = 0
            windows = 0
            batch_loss = 0.0
            epoch_loss = 0.0
            epoch_windows = 0
            stream = iter_training_windows(corpus_path, vocab, cfg.window,
                                           cfg.negatives_per_positive, rng,
                                           lowercase=cfg.lowercase)
            for center, positives, negatives in stream:
                loss = grad_of_window(center, positives, negatives, buffers)
                if not np.isfinite(loss):
                    raise NumericalError(
                        "non-finite loss; " + _param_diagnostics(params, batch_idx))
                batch_loss += loss
                epoch_loss += loss
                tasks += len(negatives)
                examples_seen += len(negatives)
                windows += 1
                epoch_windows += 1
                if tasks >= cfg.batch_size:
                    apply_batch(windows, batch_loss)
                    tasks = 0
                    windows = 0
                    batch_loss = 0.0
            if windows:
                apply_batch(windows, batch_loss)
            if epoch_losses is not None and epoch_windows:
                epoch_losses.append(epoch_loss / epoch_windows)
    finally:
        telemetry.close()


def train(corpus_path, vocab: Vocabulary, cfg: TrainConfig,
          log_path=None, epoch_losses=None) -> BsgModel:
    """Train a BsgModel by mini-batch Adam on the window margin loss.

    epoch_losses, if a list, receives the mean window loss of each epoch.
    """
    model = init_bsg_model(vocab, cfg, init_rng(cfg))
    params = model.param_arrays()

    def grad_of_window(center, positives, negatives, buffers):
        wg = window_loss_gradients(model, center, positives, negatives, cfg)
        _accumulate(buffers, wg)
        return wg.loss

    run_training_loop(corpus_path, vocab, cfg, params, grad_of_window,
                      lr=cfg.learning_rate, log_path=log_path,
                      epoch_losses=epoch_losses)
    return model
