"""Standard normal functions and the half-line Gaussian moment family M_d.

``M_d(alpha) = (2 pi)^(-1/2) int_0^inf u^d exp(-(u - alpha)^2 / 2) du``

obeys ``M_0 = Phi``, ``M_1 = alpha Phi + phi`` and
``M_k = alpha M_{k-1} + (k - 1) M_{k-2}``, with ``M_d' = d M_{d-1}``.

The forward recursion is exact algebra but cancels badly for negative
``alpha``. Below ``ALPHA_SPLIT`` the successive ratios ``r_k = M_k / M_{k-1}``
are obtained from a backward recursion instead, which is stable there.
"""

import math

import numpy as np
from scipy import integrate, special

SQRT2 = math.sqrt(2.0)
INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)
LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)

# Forward recursion is used for alpha >= ALPHA_SPLIT.
ALPHA_SPLIT = -2.0
# Extra depth of the backward ratio recursion; at alpha = ALPHA_SPLIT the
# start-value error contracts by < 0.82 per step, so 120 steps reach 1e-16.
BACKWARD_DEPTH = 120


class QuadratureError(RuntimeError):
    """Adaptive quadrature failed to reach the requested tolerance."""


def std_normal_pdf(x):
    return INV_SQRT_2PI * math.exp(-0.5 * x * x)


def std_normal_cdf(x):
    # erfc keeps full relative precision in the lower tail.
    return 0.5 * math.erfc(-x / SQRT2)


def mills_ratio(x):
    """phi(x) / Phi(x), stable for very negative ``x``."""
    if x > 0.0:
        return std_normal_pdf(x) / std_normal_cdf(x)
    # Phi(x) = exp(-x^2/2) erfcx(-x/sqrt2) / 2 cancels the Gaussian factor.
    return math.sqrt(2.0 / math.pi) / float(special.erfcx(-x / SQRT2))


def _ratios(d, alpha):
    """Return ``[r_1, ..., r_d]`` with ``r_k = M_k(alpha) / M_{k-1}(alpha)``."""
    if d == 0:
        return []
    if alpha >= ALPHA_SPLIT:
        r = [alpha + mills_ratio(alpha)]
        for k in range(2, d + 1):
            r.append(alpha + (k - 1) / r[-1])
        return r
    # r_k = k / (r_{k+1} - alpha); seeded with the fixed point of
    # r^2 - alpha r - n = 0.
    n = d + BACKWARD_DEPTH
    rk = 0.5 * (alpha + math.sqrt(alpha * alpha + 4.0 * n))
    out = [0.0] * d
    for k in range(n - 1, 0, -1):
        rk = k / (rk - alpha)
        if k <= d:
            out[k - 1] = rk
    return out


def m_function(d, alpha):
    """M_d(alpha) for integer ``d >= 0``.

    Raises OverflowError when the value is not representable.
    """
    d = int(d)
    if d < 0:
        raise ValueError(f"order must be non-negative, got {d}")
    if not math.isfinite(alpha):
        raise ValueError(f"alpha must be finite, got {alpha}")
    if alpha >= ALPHA_SPLIT:
        m0 = std_normal_cdf(alpha)
        m1 = alpha * m0 + std_normal_pdf(alpha)
        if d == 0:
            return m0
        prev, cur = m0, m1
        for i in range(2, d + 1):
            prev, cur = cur, alpha * cur + (i - 1) * prev
            if math.isinf(cur):
                raise OverflowError(f"M_{d}({alpha}) overflows")
        return cur
    log_value = log_m_function(d, alpha)
    if log_value > 709.0:
        raise OverflowError(f"M_{d}({alpha}) overflows")
    return math.exp(log_value)


def log_m_function(d, alpha):
    """log M_d(alpha), finite wherever the ratios are."""
    log_m0 = float(special.log_ndtr(alpha))
    return log_m0 + sum(math.log(r) for r in _ratios(int(d), alpha))


def m_ratio(d, alpha):
    """M'_{d-1}(alpha) / M_{d-1}(alpha) for ``d >= 1``.

    This is the coefficient of ``alpha`` in the angular Gaussian
    log-density gradient; it equals ``(d-1) M_{d-2} / M_{d-1}`` and, for
    ``d == 1``, the Mills ratio ``phi / Phi``.
    """
    d = int(d)
    if d < 1:
        raise ValueError(f"m_ratio needs d >= 1, got {d}")
    if d == 1:
        return mills_ratio(alpha)
    r = _ratios(d, alpha)
    if alpha >= ALPHA_SPLIT:
        return (d - 1) / r[d - 2]
    # r_d - alpha has no cancellation when alpha < 0.
    return r[d - 1] - alpha


def m_function_quadrature(d, alpha, rel_tol=1e-10):
    """Independent quadrature evaluation of M_d(alpha).

    Integrates the defining integral over ``[0, max(alpha, 0) + 40]``; the
    tail beyond is below ``exp(-800)`` relative to the peak.
    """
    if not 1e-14 < rel_tol < 1e-2:
        raise ValueError(f"rel_tol must lie in (1e-14, 1e-2), got {rel_tol}")
    d = int(d)
    upper = max(alpha, 0.0) + 40.0
    peak = 0.5 * (alpha + math.sqrt(alpha * alpha + 4.0 * d))

    def integrand(u):
        return u**d * math.exp(-0.5 * (u - alpha) ** 2)

    points = [peak] if 0.0 < peak < upper else None
    value, _, _, *warning = integrate.quad(
        integrand, 0.0, upper, epsabs=0.0, epsrel=rel_tol, limit=500,
        points=points, full_output=1,
    )
    # A roundoff warning still leaves a usable value; a subdivision limit does not.
    if warning and "maximum number of subdivisions" in warning[0]:
        raise QuadratureError(f"quadrature did not converge for d={d}, alpha={alpha}")
    return value * INV_SQRT_2PI


# Vectorised variants used on sample batches.

def _ratios_array(d, alpha):
    """Stack of ratios ``r_1..r_d`` for an array of alphas, shape (d,) + alpha.shape."""
    shape = np.shape(alpha)
    alpha = np.asarray(alpha, dtype=float).reshape(-1)
    out = np.empty((d, alpha.shape[0]))
    if d == 0:
        return out.reshape((d,) + shape)
    fwd = alpha >= ALPHA_SPLIT
    if fwd.any():
        a = alpha[fwd]
        # phi/Phi on the forward region; Phi(-2) ~ 0.023 so no underflow.
        r = a + np.exp(-0.5 * a * a) * INV_SQRT_2PI / special.ndtr(a)
        out[0][fwd] = r
        for k in range(2, d + 1):
            r = a + (k - 1) / r
            out[k - 1][fwd] = r
    bwd = ~fwd
    if bwd.any():
        a = alpha[bwd]
        n = d + BACKWARD_DEPTH
        rk = 0.5 * (a + np.sqrt(a * a + 4.0 * n))
        for k in range(n - 1, 0, -1):
            rk = k / (rk - a)
            if k <= d:
                out[k - 1][bwd] = rk
    return out.reshape((d,) + shape)


def m_ratio_array(d, alpha):
    """Vectorised :func:`m_ratio`."""
    alpha = np.asarray(alpha, dtype=float)
    if d < 1:
        raise ValueError(f"m_ratio needs d >= 1, got {d}")
    if d == 1:
        return np.sqrt(2.0 / np.pi) / special.erfcx(-alpha / SQRT2)
    r = _ratios_array(d, alpha)
    return np.where(alpha >= ALPHA_SPLIT, (d - 1) / r[d - 2], r[d - 1] - alpha)


def log_m_function_array(d, alpha):
    alpha = np.asarray(alpha, dtype=float)
    return special.log_ndtr(alpha) + np.log(_ratios_array(d, alpha)).sum(axis=0)
