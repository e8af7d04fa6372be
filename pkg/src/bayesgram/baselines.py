"""Baseline embedding models trained on the shared corpus stream.

Two families: skip-gram with negative sampling (SG), and Gaussian
embeddings (W2G) where each word is a single Gaussian trained with a
max-margin ranking loss over an energy between densities. Both consume
exactly the same window/negative stream as the Bayesian model for a given
seed, so comparisons isolate the model.
"""

from dataclasses import dataclass

import numpy as np

from .bsg import TrainConfig, _kl_parts, _pairs, init_rng, run_training_loop
from .corpus import Vocabulary
from .gauss import Gaussian

__all__ = ["SgModel", "W2gModel", "sg_window_loss", "sg_window_gradients",
           "w2g_energy", "w2g_energy_gradients", "w2g_window_loss",
           "w2g_window_gradients", "clip_params", "train_baseline"]

_LOG_2PI = float(np.log(2.0 * np.pi))

BASELINE_LEARNING_RATES = {"sg": 0.0015, "w2g_s": 0.0065, "w2g_d": 0.0015}


@dataclass
class SgModel:
    vocab: Vocabulary
    dim: int
    in_vec: np.ndarray    # V x d, center-word vectors
    out_vec: np.ndarray   # V x d, context-word vectors

    def param_arrays(self):
        return {"in_vec": self.in_vec, "out_vec": self.out_vec}


@dataclass
class W2gModel:
    vocab: Vocabulary
    cov_kind: str
    dim: int
    mean: np.ndarray       # V x d
    log_var: np.ndarray    # V (spherical) or V x d (diagonal)
    energy_kind: str = "expected_likelihood"
    max_mean_norm: float = 20.0
    var_lo: float = 1e-3
    var_hi: float = 10.0

    def gaussian(self, w: int) -> Gaussian:
        return Gaussian(self.mean[w], self.log_var[w])

    def param_arrays(self):
        return {"mean": self.mean, "log_var": self.log_var}


def _log_sigmoid(x):
    return -np.logaddexp(0.0, -x)


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def sg_window_loss(model: SgModel, center, positives, negatives) -> float:
    """Negative-sampling skip-gram loss for one window."""
    if len(positives) == 0:
        raise ValueError("empty positives")
    if len(negatives) % len(positives) != 0:
        raise ValueError("length mismatch: negatives must be a multiple of positives")
    v = np.asarray(model.in_vec[center], dtype=np.float64)
    pos = np.asarray(model.out_vec[list(positives)], dtype=np.float64)
    neg = np.asarray(model.out_vec[list(negatives)], dtype=np.float64)
    return float(-np.sum(_log_sigmoid(pos @ v)) - np.sum(_log_sigmoid(-(neg @ v))))


def sg_window_gradients(model: SgModel, center, positives, negatives, buffers):
    """Accumulate exact SG gradients into dense buffers; returns the loss."""
    if len(positives) == 0:
        raise ValueError("empty positives")
    if len(negatives) % len(positives) != 0:
        raise ValueError("length mismatch: negatives must be a multiple of positives")
    v = np.asarray(model.in_vec[center], dtype=np.float64)
    d_in = buffers["in_vec"]
    d_out = buffers["out_vec"]
    loss = 0.0
    dv = np.zeros_like(v)
    for c in positives:
        u = np.asarray(model.out_vec[c], dtype=np.float64)
        s = float(u @ v)
        loss -= float(_log_sigmoid(s))
        coef = -(1.0 - _sigmoid(s))
        dv += coef * u
        d_out[c] += coef * v
    for c in negatives:
        u = np.asarray(model.out_vec[c], dtype=np.float64)
        s = float(u @ v)
        loss -= float(_log_sigmoid(-s))
        coef = _sigmoid(s)
        dv += coef * u
        d_out[c] += coef * v
    d_in[center] += dv
    return loss


def w2g_energy(a: Gaussian, b: Gaussian, kind: str) -> float:
    """Similarity energy between two Gaussians (higher = more similar)."""
    e, _ = _energy_parts(a.mean, a.log_var, b.mean, b.log_var, kind)
    return e


def _energy_parts(mu_a, lv_a, mu_b, lv_b, kind):
    """Energy value plus partials w.r.t. (mu_a, lv_a, mu_b, lv_b)."""
    d = mu_a.shape[0]
    if mu_b.shape[0] != d:
        raise ValueError("dimension mismatch")
    if kind == "expected_likelihood":
        lva = np.broadcast_to(np.atleast_1d(lv_a), (d,))
        lvb = np.broadcast_to(np.atleast_1d(lv_b), (d,))
        va = np.exp(lva)
        vb = np.exp(lvb)
        s = va + vb
        dmu = mu_a - mu_b
        val = float(-0.5 * np.sum(np.log(2.0 * np.pi * s) + dmu * dmu / s))
        g_mu_a = -dmu / s
        g_s = -0.5 * (1.0 / s - dmu * dmu / (s * s))
        g_lva = g_s * va
        g_lvb = g_s * vb
        if np.ndim(lv_a) == 0:
            g_lva = g_lva.sum()
        if np.ndim(lv_b) == 0:
            g_lvb = g_lvb.sum()
        return val, (g_mu_a, g_lva, -g_mu_a, g_lvb)
    if kind == "negated_kl":
        # -KL(b || a): the context density read from the word density
        val, g_mu1, g_lv1, g_lv2 = _kl_parts(mu_b, lv_b, mu_a, lv_a)
        return -val, (g_mu1, -g_lv2, -g_mu1, -g_lv1)
    raise ValueError(f"unknown energy kind {kind!r}")


def w2g_energy_gradients(a: Gaussian, b: Gaussian, kind: str):
    """(energy, d/d mu_a, d/d lv_a, d/d mu_b, d/d lv_b)."""
    val, grads = _energy_parts(a.mean, a.log_var, b.mean, b.log_var, kind)
    return (val,) + grads


def w2g_window_loss(model: W2gModel, center, positives, negatives,
                    margin: float) -> float:
    """Max-margin ranking loss over positive/negative energies."""
    loss, _ = _w2g_core(model, center, positives, negatives, margin, False, None)
    return loss


def w2g_window_gradients(model: W2gModel, center, positives, negatives,
                         margin: float, buffers) -> float:
    loss, _ = _w2g_core(model, center, positives, negatives, margin, True, buffers)
    return loss


def _w2g_core(model, center, positives, negatives, margin, want_grads, buffers):
    if len(positives) == 0:
        raise ValueError("empty positives")
    spherical = model.cov_kind == "spherical"
    mu_w = np.asarray(model.mean[center], dtype=np.float64)
    lv_w = (float(model.log_var[center]) if spherical
            else np.asarray(model.log_var[center], dtype=np.float64))

    def parts(word):
        mu = np.asarray(model.mean[word], dtype=np.float64)
        lv = (float(model.log_var[word]) if spherical
              else np.asarray(model.log_var[word], dtype=np.float64))
        return _energy_parts(mu_w, lv_w, mu, lv, model.energy_kind)

    e_pos = [parts(w) for w in positives]
    e_neg = [parts(w) for w in negatives]
    pairs = _pairs(len(positives), len(negatives), all_pairs=False)
    loss = 0.0
    active = []
    for j, k in pairs:
        arg = margin - e_pos[j][0] + e_neg[k][0]
        if arg > 0.0:
            loss += arg
            active.append((j, k))
    if not want_grads:
        return loss, None

    d_mean = buffers["mean"]
    d_lv = buffers["log_var"]
    dmu_w = np.zeros_like(mu_w)
    dlv_w = 0.0 if spherical else np.zeros_like(mu_w)

    def add(word, grads, coef):
        nonlocal dmu_w, dlv_w
        g_mu_a, g_lva, g_mu_b, g_lvb = grads
        dmu_w = dmu_w + coef * g_mu_a
        dlv_w = dlv_w + coef * g_lva
        d_mean[word] += coef * g_mu_b
        d_lv[word] += coef * g_lvb

    for j, k in active:
        add(positives[j], e_pos[j][1], -1.0)
        add(negatives[k], e_neg[k][1], +1.0)
    d_mean[center] += dmu_w
    d_lv[center] += dlv_w
    return loss, None


def clip_params(model: W2gModel) -> W2gModel:
    """Project means into the norm ball and variances into bounds. Idempotent."""
    norms = np.linalg.norm(np.asarray(model.mean, dtype=np.float64), axis=1)
    over = norms > model.max_mean_norm
    if np.any(over):
        scale = np.ones_like(norms)
        scale[over] = model.max_mean_norm / norms[over]
        model.mean *= scale[:, None].astype(model.mean.dtype)
    np.clip(model.log_var, np.log(model.var_lo), np.log(model.var_hi),
            out=model.log_var)
    return model


def init_sg_model(vocab, cfg: TrainConfig, rng) -> SgModel:
    V, d = len(vocab), cfg.dim
    dtype = np.dtype(cfg.param_dtype)
    return SgModel(vocab=vocab, dim=d,
                   in_vec=rng.uniform(-0.5 / d, 0.5 / d, size=(V, d)).astype(dtype),
                   out_vec=np.zeros((V, d), dtype=dtype))


def init_w2g_model(vocab, cfg: TrainConfig, rng, cov_kind,
                   energy_kind="expected_likelihood", max_mean_norm=20.0,
                   var_lo=1e-3, var_hi=10.0) -> W2gModel:
    V, d = len(vocab), cfg.dim
    dtype = np.dtype(cfg.param_dtype)
    lv_shape = (V,) if cov_kind == "spherical" else (V, d)
    return W2gModel(vocab=vocab, cov_kind=cov_kind, dim=d,
                    mean=rng.uniform(-0.5 / d, 0.5 / d, size=(V, d)).astype(dtype),
                    log_var=np.zeros(lv_shape, dtype=dtype),
                    energy_kind=energy_kind, max_mean_norm=max_mean_norm,
                    var_lo=var_lo, var_hi=var_hi)


def train_baseline(kind: str, corpus_path, vocab: Vocabulary, cfg: TrainConfig,
                   log_path=None, epoch_losses=None, learning_rate=None,
                   **w2g_kwargs):
    """Train one baseline: kind in {"sg", "w2g_s", "w2g_d"}.

    Learning-rate defaults follow BASELINE_LEARNING_RATES; the corpus stream
    is identical to the Bayesian trainer's for equal seeds.
    """
    if kind not in BASELINE_LEARNING_RATES:
        raise ValueError(f"unknown baseline kind {kind!r}")
    lr = learning_rate if learning_rate is not None else BASELINE_LEARNING_RATES[kind]
    rng = init_rng(cfg)
    if kind == "sg":
        model = init_sg_model(vocab, cfg, rng)

        def grad_of_window(center, positives, negatives, buffers):
            return sg_window_gradients(model, center, positives, negatives, buffers)

        post_batch = None
    else:
        cov_kind = "spherical" if kind == "w2g_s" else "diagonal"
        model = init_w2g_model(vocab, cfg, rng, cov_kind, **w2g_kwargs)

        def grad_of_window(center, positives, negatives, buffers):
            return w2g_window_gradients(model, center, positives, negatives,
                                        cfg.margin, buffers)

        def post_batch(_params):
            clip_params(model)

    run_training_loop(corpus_path, vocab, cfg, model.param_arrays(),
                      grad_of_window, lr=lr, post_batch=post_batch,
                      log_path=log_path, epoch_losses=epoch_losses)
    if kind != "sg":
        clip_params(model)
    return model
