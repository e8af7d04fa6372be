"""Inference network: (center word, context words) -> posterior Gaussian.

Architecture: each context word's input embedding is concatenated with the
center word's, pushed through one ReLU layer, and the results are summed
(sum, not mean, so duplicated context words count twice). Two linear heads
on top of the sum produce the posterior mean and log-variance. The
log-variance head has a single output row for spherical posteriors and d
rows for diagonal ones.
"""

from dataclasses import dataclass, field

import numpy as np

from .gauss import Gaussian

__all__ = ["EncoderParams", "EncoderGrads", "init_encoder", "infer_posterior",
           "encoder_backward"]


@dataclass
class EncoderParams:
    R: np.ndarray   # |V| x d input embeddings
    M: np.ndarray   # d_h x 2d hidden layer
    U: np.ndarray   # d x d_h mean head
    b1: np.ndarray  # d
    W: np.ndarray   # (1 or d) x d_h log-variance head
    b2: np.ndarray  # (1,) or (d,)

    def __post_init__(self):
        d_h, two_d = self.M.shape
        d = two_d // 2
        if two_d != 2 * d or self.R.shape[1] != d:
            raise ValueError("M must be d_h x 2d with d matching R")
        if self.U.shape != (d, d_h) or self.b1.shape != (d,):
            raise ValueError("mean head shape mismatch")
        if self.W.shape[0] not in (1, d) or self.W.shape[1] != d_h:
            raise ValueError("log-variance head must have 1 or d rows")
        if self.b2.shape != (self.W.shape[0],):
            raise ValueError("b2 shape must match W rows")

    @property
    def dim(self) -> int:
        return self.R.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.M.shape[0]

    @property
    def cov_kind(self) -> str:
        return "spherical" if self.W.shape[0] == 1 else "diagonal"

    def copy(self):
        return EncoderParams(self.R.copy(), self.M.copy(), self.U.copy(),
                             self.b1.copy(), self.W.copy(), self.b2.copy())


@dataclass
class EncoderGrads:
    """Gradients for one (or an accumulated batch of) encoder backward pass.

    R gradients are sparse: only rows touched by the window appear in dR.
    """

    dM: np.ndarray
    dU: np.ndarray
    db1: np.ndarray
    dW: np.ndarray
    db2: np.ndarray
    dR: dict = field(default_factory=dict)

    def dR_dense(self, vocab_size: int) -> np.ndarray:
        out = np.zeros((vocab_size, self.dU.shape[0]))
        for i, g in self.dR.items():
            out[i] = g
        return out


def init_encoder(vocab_size: int, d: int, d_h: int, cov_kind: str,
                 rng: np.random.Generator) -> EncoderParams:
    """Glorot-uniform weights, zero biases, small uniform input embeddings."""

    def glorot(rows, cols):
        bound = np.sqrt(6.0 / (rows + cols))
        return rng.uniform(-bound, bound, size=(rows, cols))

    k = 1 if cov_kind == "spherical" else d
    return EncoderParams(
        R=rng.uniform(-0.5 / d, 0.5 / d, size=(vocab_size, d)),
        M=glorot(d_h, 2 * d),
        U=glorot(d, d_h),
        b1=np.zeros(d),
        W=glorot(k, d_h),
        b2=np.zeros(k),
    )


def _forward(center, contexts, params):
    R = params.R
    ctx = np.asarray(contexts, dtype=np.intp)
    X = np.concatenate([R[ctx], np.broadcast_to(R[center], (len(ctx), params.dim))],
                       axis=1)                       # C x 2d
    A = X @ params.M.T                               # C x d_h, pre-activation
    h = np.maximum(A, 0.0).sum(axis=0)               # d_h
    mu = params.U @ h + params.b1
    lv = params.W @ h + params.b2
    return X, A, h, mu, lv


def infer_posterior(center, contexts, params: EncoderParams) -> Gaussian:
    """Posterior Gaussian for one occurrence of `center` amid `contexts`."""
    if len(contexts) == 0:
        raise ValueError("posterior undefined without context")
    _, _, _, mu, lv = _forward(center, contexts, params)
    if lv.shape[0] == 1:
        return Gaussian(mu, np.float64(lv[0]))
    return Gaussian(mu, lv)


def encoder_backward(center, contexts, params: EncoderParams,
                     d_mu: np.ndarray, d_log_var) -> EncoderGrads:
    """Exact gradients of a scalar loss through (mu_q, log var_q).

    d_log_var is a scalar for spherical encoders, a (d,) vector for diagonal.
    Only R rows for the center and context words receive gradient.
    """
    if len(contexts) == 0:
        raise ValueError("posterior undefined without context")
    d_mu = np.asarray(d_mu, dtype=np.float64)
    d_lv = np.atleast_1d(np.asarray(d_log_var, dtype=np.float64))
    if d_mu.shape != (params.dim,):
        raise ValueError("d_mu shape mismatch")
    if d_lv.shape != (params.W.shape[0],):
        raise ValueError("d_log_var shape mismatch")

    X, A, h, _, _ = _forward(center, contexts, params)
    dh = params.U.T @ d_mu + params.W.T @ d_lv
    dA = (A > 0.0) * dh                               # C x d_h; dead units pass nothing
    dM = dA.T @ X
    dX = dA @ params.M                                # C x 2d
    d = params.dim
    grads = EncoderGrads(dM=dM,
                         dU=np.outer(d_mu, h), db1=d_mu.copy(),
                         dW=np.outer(d_lv, h), db2=d_lv.copy())
    dR = grads.dR
    for j, c in enumerate(contexts):
        row = dR.get(c)
        if row is None:
            dR[c] = dX[j, :d].copy()
        else:
            row += dX[j, :d]
    center_part = dX[:, d:].sum(axis=0)
    if center in dR:
        dR[center] += center_part
    else:
        dR[center] = center_part
    return grads
