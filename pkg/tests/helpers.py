"""Shared test utilities: flat parameter vectors and gradient checking."""

import numpy as np

from bayesgram import bsg, oracles
from bayesgram.corpus import Vocabulary


def tiny_vocab(n=12, seed=None):
    words = [f"w{i}" for i in range(n)]
    counts = np.arange(1, n + 1, dtype=np.int64)
    return Vocabulary(words, counts)


def flatten(params: dict, names):
    return np.concatenate([np.asarray(params[n], dtype=np.float64).reshape(-1)
                           for n in names])


def write_back(params: dict, names, vec):
    off = 0
    for n in names:
        a = params[n]
        a[...] = vec[off:off + a.size].reshape(a.shape)
        off += a.size


def rel_err(analytic, fd):
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(fd)), 1e-3)
    return float(np.max(np.abs(analytic - fd) / denom))


def perturbed_bsg_model(vocab, cfg, rng, scale=0.2):
    model = bsg.init_bsg_model(vocab, cfg, rng)
    for arr in model.param_arrays().values():
        arr += rng.normal(scale=scale, size=arr.shape)
    return model


def bsg_dense_grads(model, wg):
    """Scatter sparse WindowGrads into dense arrays matching param_arrays."""
    dense = {k: np.zeros(v.shape) for k, v in model.param_arrays().items()}
    for w, (dmu, dlv) in wg.prior.items():
        dense["prior_mean"][w] = dmu
        dense["prior_log_var"][w] = dlv
    for w, (dmu, dlv) in wg.ctx.items():
        dense["ctx_mean"][w] = dmu
        dense["ctx_log_var"][w] = dlv
    dense["enc_M"] = wg.enc.dM
    dense["enc_U"] = wg.enc.dU
    dense["enc_b1"] = wg.enc.db1
    dense["enc_W"] = wg.enc.dW
    dense["enc_b2"] = wg.enc.db2
    for w, g in wg.enc.dR.items():
        dense["enc_R"][w] = g
    return dense


def bsg_gradcheck(model, cfg, center, positives, negatives, h=1e-6):
    """Max relative error of analytic window-loss grads vs finite differences."""
    wg = bsg.window_loss_gradients(model, center, positives, negatives, cfg)
    params = model.param_arrays()
    names = sorted(params)
    x0 = flatten(params, names)

    def loss_of(vec):
        write_back(params, names, vec)
        return bsg.window_loss(model, center, positives, negatives, cfg)

    fd = oracles.finite_diff_grad(loss_of, x0, h)
    write_back(params, names, x0)
    analytic = flatten(bsg_dense_grads(model, wg), names)
    return rel_err(analytic, fd)
