"""Isotropic Gaussian sampling policy and the laws of its transformed actions.

All functions broadcast over leading batch dimensions: ``mean`` may be a
single vector ``(d,)`` or one row per sample ``(n, d)``. Scores are
gradients of the log-density with respect to the mean vector and the shared
scale ``sigma``.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import special as sps

from mpg import kernels
from mpg.special import LOG_SQRT_2PI, SQRT2, log_m_function_array

SIGMA_FLOOR = 1e-4
UNIT_TOL = 1e-12


@dataclass(frozen=True)
class DiagGaussianParams:
    """``N(mean, sigma^2 I)``; ``sigma`` is a scalar shared by all coordinates."""

    mean: np.ndarray
    sigma: float

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        if mean.ndim == 0:
            mean = mean.reshape(1)
        if not np.all(np.isfinite(mean)):
            raise ValueError("mean must be finite")
        sigma = float(self.sigma)
        if not sigma >= SIGMA_FLOOR:
            raise ValueError(f"sigma must be >= {SIGMA_FLOOR}, got {sigma}")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "sigma", sigma)

    @property
    def dim(self):
        return self.mean.shape[-1]


@dataclass(frozen=True)
class ClipInterval:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"need lo < hi, got [{self.lo}, {self.hi}]")


@dataclass
class ScoreVector:
    """Gradient of a log-density: ``d_mean`` has shape (..., d), ``d_sigma`` (...)."""

    d_mean: np.ndarray
    d_sigma: np.ndarray

    def flat(self):
        return np.concatenate([self.d_mean, np.asarray(self.d_sigma)[..., None]], axis=-1)

    def __sub__(self, other):
        return ScoreVector(self.d_mean - other.d_mean, self.d_sigma - other.d_sigma)


def as_unit_vector(x):
    x = np.asarray(x, dtype=float)
    if np.any(np.abs(np.linalg.norm(x, axis=-1) - 1.0) > UNIT_TOL):
        raise ValueError("expected unit vectors")
    return x


# -- multivariate Gaussian -------------------------------------------------

def gaussian_sample(params, rng, size=None):
    shape = params.mean.shape if size is None else (size,) + params.mean.shape
    return params.mean + params.sigma * rng.standard_normal(shape)


def gaussian_log_density(params, a):
    a = np.asarray(a, dtype=float)
    d, s = params.dim, params.sigma
    sq = np.sum((a - params.mean) ** 2, axis=-1)
    return -d * LOG_SQRT_2PI - d * math.log(s) - sq / (2.0 * s * s)


def gaussian_score(params, a):
    a = np.asarray(a, dtype=float)
    s = params.sigma
    diff = a - params.mean
    return ScoreVector(diff / s**2, np.sum(diff * diff, axis=-1) / s**3 - params.dim / s)


# -- angular Gaussian: law of a / ||a|| --------------------------------------

def angular_sample(params, rng, size=None):
    a = gaussian_sample(params, rng, size)
    norm = np.linalg.norm(a, axis=-1, keepdims=True)
    # ||a|| == 0 has probability zero; redraw just in case.
    bad = norm[..., 0] < 1e-300
    while np.any(bad):
        a[bad] = gaussian_sample(DiagGaussianParams(np.broadcast_to(params.mean, a.shape)[bad],
                                                    params.sigma), rng)
        norm = np.linalg.norm(a, axis=-1, keepdims=True)
        bad = norm[..., 0] < 1e-300
    return a / norm


def _check_angular(params):
    if params.dim < 2:
        raise ValueError("the angular Gaussian needs d >= 2")


def angular_log_density(params, x):
    """Density on the sphere w.r.t. surface measure."""
    _check_angular(params)
    x = np.asarray(x, dtype=float)
    d, s, m = params.dim, params.sigma, params.mean
    alpha = np.sum(x * m, axis=-1) / s
    mm = np.sum(m * m, axis=-1) / s**2
    # With Sigma = s^2 I the |Sigma| and (x' Sigma^-1 x)^d factors cancel.
    return (-(d - 1) * LOG_SQRT_2PI + 0.5 * (alpha * alpha - mm)
            + log_m_function_array(d - 1, alpha))


def angular_score(params, x):
    _check_angular(params)
    x = np.asarray(x, dtype=float)
    d, s, m = params.dim, params.sigma, params.mean
    alpha = np.sum(x * m, axis=-1) / s
    ratio = kernels.m_ratio_array(d, alpha)
    d_mean = ((alpha + ratio) / s)[..., None] * x - m / s**2
    d_sigma = (np.sum(m * m, axis=-1) / s**2 - alpha * alpha - ratio * alpha) / s
    return ScoreVector(d_mean, d_sigma)


def radial_score(params, a):
    """Score of the law of ``||a||`` given ``a / ||a||``."""
    a = np.asarray(a, dtype=float)
    b = a / np.linalg.norm(a, axis=-1, keepdims=True)
    return gaussian_score(params, a) - angular_score(params, b)


def radial_log_density(params, b, r):
    """log f(r | b) = (d-1) log r + log f_MV(r b) - log f_AG(b)."""
    b = np.asarray(b, dtype=float)
    r = np.asarray(r, dtype=float)
    return ((params.dim - 1) * np.log(r) + gaussian_log_density(params, r[..., None] * b)
            - angular_log_density(params, b))


# -- clipped Gaussian on [lo, hi] (d = 1) ----------------------------------

def _mills(z):
    """phi(z) / Phi(z) without cancellation in the lower tail."""
    return math.sqrt(2.0 / math.pi) / sps.erfcx(-np.asarray(z, dtype=float) / SQRT2)


def _scalar_mean(params):
    if params.dim != 1:
        raise ValueError("the clipped distribution is one-dimensional")
    return params.mean[..., 0]


def _check_support(iv, b):
    b = np.asarray(b, dtype=float)
    if np.any(b < iv.lo) or np.any(b > iv.hi):
        raise ValueError(f"point outside [{iv.lo}, {iv.hi}]")
    return b


def clip_action(iv, a):
    return np.clip(a, iv.lo, iv.hi)


def clipped_log_density(params, iv, b):
    """Density w.r.t. delta_lo + delta_hi + Lebesgue on (lo, hi)."""
    b = _check_support(iv, b)
    m, s = _scalar_mean(params), params.sigma
    z_lo = (iv.lo - m) / s
    z_hi = (iv.hi - m) / s
    inner = -LOG_SQRT_2PI - math.log(s) - 0.5 * ((b - m) / s) ** 2
    return np.where(b <= iv.lo, sps.log_ndtr(z_lo),
                    np.where(b >= iv.hi, sps.log_ndtr(-z_hi), inner))


def clipped_score(params, iv, b):
    b = _check_support(iv, b)
    m, s = _scalar_mean(params), params.sigma
    z_lo = (iv.lo - m) / s
    z_hi = (iv.hi - m) / s
    lam_lo = _mills(z_lo)
    lam_hi = _mills(-z_hi)
    diff = b - m
    at_lo, at_hi = b <= iv.lo, b >= iv.hi
    d_mean = np.where(at_lo, -lam_lo / s, np.where(at_hi, lam_hi / s, diff / s**2))
    d_sigma = np.where(at_lo, -z_lo * lam_lo / s,
                       np.where(at_hi, z_hi * lam_hi / s, diff * diff / s**3 - 1.0 / s))
    return ScoreVector(np.asarray(d_mean)[..., None], np.asarray(d_sigma))


# -- wrapped angle baseline --------------------------------------------------

def wrapped_angle_action(angle):
    """Executed direction (cos a, sin a) for a sampled angle."""
    angle = np.asarray(angle, dtype=float)
    return np.stack([np.cos(angle), np.sin(angle)], axis=-1)


def wrapped_angle_log_density(mean_angle, sigma, sampled_angle):
    z = (np.asarray(sampled_angle, dtype=float) - mean_angle) / sigma
    return -LOG_SQRT_2PI - np.log(sigma) - 0.5 * z * z


def wrapped_angle_score(mean_angle, sigma, sampled_angle):
    """Plain 1-D Gaussian score in the unwrapped sampled angle."""
    if not sigma >= SIGMA_FLOOR:
        raise ValueError(f"sigma must be >= {SIGMA_FLOOR}")
    diff = np.asarray(sampled_angle, dtype=float) - mean_angle
    return ScoreVector(np.asarray(diff / sigma**2)[..., None],
                       np.asarray(diff * diff / sigma**3 - 1.0 / sigma))
