"""Gaussian density values and their closed-form math.

A Gaussian here is a mean vector plus a stored log-variance, either a
single scalar shared across dimensions ("spherical") or one value per
dimension ("diagonal"). Log-variance is the canonical parameterization
throughout the package: it keeps every representable covariance positive
definite.
"""

from dataclasses import dataclass

import numpy as np

__all__ = ["Gaussian", "kl_divergence", "log_density", "cosine", "log_det_cov"]

_LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class Gaussian:
    """Diagonal-or-spherical Gaussian. log_var has shape () or (d,)."""

    mean: np.ndarray
    log_var: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=np.float64))
        object.__setattr__(self, "log_var", np.asarray(self.log_var, dtype=np.float64))
        if self.mean.ndim != 1:
            raise ValueError("mean must be a 1-D vector")
        if self.log_var.ndim not in (0, 1):
            raise ValueError("log_var must be a scalar or a 1-D vector")
        if self.log_var.ndim == 1 and self.log_var.shape[0] != self.mean.shape[0]:
            raise ValueError("diagonal log_var length must match mean dimension")
        if not (np.all(np.isfinite(self.mean)) and np.all(np.isfinite(self.log_var))):
            raise ValueError("Gaussian parameters must be finite")

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    @property
    def cov_kind(self) -> str:
        return "spherical" if self.log_var.ndim == 0 else "diagonal"

    def log_var_vector(self) -> np.ndarray:
        """Log-variance broadcast to a full (d,) vector."""
        if self.log_var.ndim == 0:
            return np.full(self.dim, float(self.log_var))
        return self.log_var

    def std_vector(self) -> np.ndarray:
        return np.exp(0.5 * self.log_var_vector())


def _check_dims(p: Gaussian, q: Gaussian):
    if p.dim != q.dim:
        raise ValueError(f"dimension mismatch: {p.dim} vs {q.dim}")


def kl_divergence(p: Gaussian, q: Gaussian) -> float:
    """D_KL[p || q] for diagonal Gaussians, in closed form.

    0.5 * sum_d [ s1/s2 + (mu2-mu1)^2/s2 - 1 + log(s2/s1) ]
    with s = variance per coordinate.
    """
    _check_dims(p, q)
    lv1 = p.log_var_vector()
    lv2 = q.log_var_vector()
    dmu = q.mean - p.mean
    terms = np.exp(lv1 - lv2) + dmu * dmu * np.exp(-lv2) - 1.0 + (lv2 - lv1)
    return float(0.5 * np.sum(terms))


def log_density(g: Gaussian, z: np.ndarray) -> float:
    """Log pdf of the diagonal Gaussian g at point z."""
    z = np.asarray(z, dtype=np.float64)
    if z.shape != g.mean.shape:
        raise ValueError(f"dimension mismatch: point {z.shape} vs mean {g.mean.shape}")
    lv = g.log_var_vector()
    dz = z - g.mean
    return float(-0.5 * np.sum(_LOG_2PI + lv + dz * dz * np.exp(-lv)))


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    """Cosine of the angle between two nonzero vectors."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch: {u.shape} vs {v.shape}")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise ValueError("undefined cosine: zero vector")
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


def log_det_cov(g: Gaussian) -> float:
    """log det of the covariance: sum of per-coordinate log-variances."""
    return float(np.sum(g.log_var_vector()))
