"""Deterministic oracle suites behind ``mpg check``.

Each suite returns a list of :class:`CheckResult`; a check passes when its
error is at or below the tolerance.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from mpg import distributions as D
from mpg import nn
from mpg.estimators import finite_diff_check
from mpg.special import m_function, m_function_quadrature

MFUN_DS = tuple(range(11))
MFUN_ALPHAS = tuple(np.round(np.arange(-5.0, 5.0001, 0.5), 10))


@dataclass
class CheckResult:
    suite: str
    name: str
    error: float
    tol: float

    @property
    def passed(self):
        return bool(self.error <= self.tol)

    def line(self):
        flag = "PASS" if self.passed else "FAIL"
        return f"{flag}  {self.suite:<13} {self.name:<34} err={self.error:.3e} tol={self.tol:.0e}"


def _worst(suite, name, errors, tol):
    return CheckResult(suite, name, float(np.max(errors)) if len(errors) else 0.0, tol)


# -- M-function ---------------------------------------------------------------

def mfun_table(ds=MFUN_DS, alphas=MFUN_ALPHAS):
    """Rows ``(d, alpha, recursion, quadrature, rel_err)``."""
    rows = []
    for d in ds:
        for a in alphas:
            rec = m_function(d, float(a))
            quad = m_function_quadrature(d, float(a))
            rows.append((d, float(a), rec, quad, abs(rec - quad) / abs(quad)))
    return rows


def suite_mfun(tol=1e-8):
    rows = mfun_table()
    return [_worst("mfun", f"M_{d} recursion vs quadrature", [r[4] for r in rows if r[0] == d], tol)
            for d in MFUN_DS]


# -- gradients ----------------------------------------------------------------

def _rand_gauss(rng, d):
    return rng.uniform(-2.0, 2.0, d), rng.uniform(0.2, 2.0)


def _split(theta):
    return D.DiagGaussianParams(theta[:-1], theta[-1])


def suite_grads(n=100, n_mlp=50, seed=0, tol=1e-5):
    rng = np.random.default_rng(seed)
    out = []

    errs = []
    for _ in range(n):
        d = int(rng.integers(1, 5))
        m, s = _rand_gauss(rng, d)
        a = m + s * rng.standard_normal(d)
        errs.append(finite_diff_check(
            lambda th, x: D.gaussian_log_density(_split(th), x),
            lambda th, x: D.gaussian_score(_split(th), x).flat(), a, np.append(m, s)))
    out.append(_worst("grads", "gaussian score", errs, tol))

    errs = []
    for _ in range(n):
        d = int(rng.integers(2, 6))
        m, s = _rand_gauss(rng, d)
        x = D.angular_sample(D.DiagGaussianParams(m, s), rng)
        errs.append(finite_diff_check(
            lambda th, x: D.angular_log_density(_split(th), x),
            lambda th, x: D.angular_score(_split(th), x).flat(), x, np.append(m, s)))
    out.append(_worst("grads", "angular score", errs, tol))

    boundary, interior = [], []
    for _ in range(n):
        lo = rng.uniform(-2.0, 0.5)
        iv = D.ClipInterval(lo, lo + rng.uniform(0.2, 3.0))
        m, s = rng.uniform(-3.0, 3.0), rng.uniform(0.2, 2.0)
        th = np.array([m, s])

        def logf(th, b, iv=iv):
            return D.clipped_log_density(D.DiagGaussianParams(th[:1], th[1]), iv, b)

        def score(th, b, iv=iv):
            return D.clipped_score(D.DiagGaussianParams(th[:1], th[1]), iv, b).flat()

        b_edge = iv.lo if rng.random() < 0.5 else iv.hi
        boundary.append(finite_diff_check(logf, score, b_edge, th))
        interior.append(finite_diff_check(logf, score, rng.uniform(iv.lo, iv.hi), th))
    out.append(_worst("grads", "clipped boundary score", boundary, tol))
    out.append(_worst("grads", "clipped interior score", interior, tol))

    errs = []
    for _ in range(n):
        mu, s = rng.uniform(-math.pi, math.pi), rng.uniform(0.2, 2.0)
        ang = mu + s * rng.standard_normal()
        errs.append(finite_diff_check(
            lambda th, y: D.wrapped_angle_log_density(th[0], th[1], y),
            lambda th, y: D.wrapped_angle_score(th[0], th[1], y).flat(), ang,
            np.array([mu, s])))
    out.append(_worst("grads", "wrapped-angle score", errs, tol))

    errs = []
    acts = ("tanh", "selu", "identity")
    for i in range(n_mlp):
        widths = (int(rng.integers(1, 5)), *rng.integers(1, 9, int(rng.integers(1, 3))),
                  int(rng.integers(1, 4)))
        spec = nn.MlpSpec(widths, acts[i % 3], int(rng.integers(1 << 30)))
        theta = nn.init_params(spec).values
        x = rng.standard_normal(spec.n_inputs)
        u = rng.standard_normal(spec.n_outputs)
        errs.append(finite_diff_check(
            lambda th, x, spec=spec, u=u: u @ nn.forward(spec, th, x),
            lambda th, x, spec=spec, u=u: nn.backward(spec, th, x, u), x, theta))
    out.append(_worst("grads", "mlp backward", errs, tol))
    return out


# -- normalization ------------------------------------------------------------

def angular_mass_s1(params, n_grid=4096):
    # periodic integrand: the trapezoid rule converges geometrically
    t = np.linspace(0.0, 2.0 * math.pi, n_grid, endpoint=False)
    x = np.stack([np.cos(t), np.sin(t)], axis=-1)
    return float(np.exp(D.angular_log_density(params, x)).sum() * 2.0 * math.pi / n_grid)


def clipped_mass(params, iv):
    m, s = float(params.mean[0]), params.sigma
    dens = lambda b: math.exp(-0.5 * ((b - m) / s) ** 2) / (s * math.sqrt(2.0 * math.pi))
    inner, _ = integrate.quad(dens, iv.lo, iv.hi, epsabs=1e-14, epsrel=1e-13, points=[m]
                              if iv.lo < m < iv.hi else None, limit=200)
    ends = np.exp(D.clipped_log_density(params, iv, np.array([iv.lo, iv.hi])))
    return float(ends.sum() + inner)


def gaussian_grid_mass(params, n_grid=20001):
    m, s = float(params.mean[0]), params.sigma
    a = np.linspace(m - 12 * s, m + 12 * s, n_grid)
    return float(integrate.trapezoid(np.exp(D.gaussian_log_density(params, a[:, None])), a))


def suite_normalization(n=50, seed=0):
    rng = np.random.default_rng(seed)
    ang, clip, gauss = [], [], []
    for _ in range(n):
        m, s = _rand_gauss(rng, 2)
        ang.append(abs(angular_mass_s1(D.DiagGaussianParams(m, s)) - 1.0))
        lo = rng.uniform(-2.0, 1.0)
        iv = D.ClipInterval(lo, lo + rng.uniform(0.1, 3.0))
        p1 = D.DiagGaussianParams([rng.uniform(-3.0, 3.0)], rng.uniform(0.1, 2.0))
        clip.append(abs(clipped_mass(p1, iv) - 1.0))
        gauss.append(abs(gaussian_grid_mass(p1) - 1.0))
    return [_worst("normalization", "angular gaussian on S^1", ang, 1e-6),
            _worst("normalization", "clipped gaussian mass", clip, 1e-10),
            _worst("normalization", "gaussian grid (d=1)", gauss, 1e-6)]


# -- polar decomposition ------------------------------------------------------

def _radial_moments(params, b):
    """(mass, E[psi_r]) of the radial law r | b, by quadrature over r > 0."""
    b = np.asarray(b, dtype=float)
    k = params.dim + 1
    alpha = float(b @ params.mean) / params.sigma
    hi = params.sigma * (max(alpha, 0.0) + 40.0)

    def f(r):
        return math.exp(float(D.radial_log_density(params, b, np.array(r))))

    def g(r, i):
        return D.radial_score(params, r * b).flat()[i] * f(r)

    peak = [params.sigma * max(alpha, 0.0)] if alpha > 0 else None
    mass = integrate.quad(f, 0.0, hi, points=peak, epsabs=1e-13, epsrel=1e-11, limit=200)[0]
    mean = [integrate.quad(g, 0.0, hi, args=(i,), points=peak, epsabs=1e-11,
                           epsrel=1e-10, limit=200)[0] for i in range(k)]
    return mass, np.array(mean)


def suite_polar(n=20, seed=0, tol=1e-7):
    """Radial conditional is a density, its score has conditional mean zero,
    and the Gaussian score splits exactly into angular plus radial parts."""
    rng = np.random.default_rng(seed)
    mass_err, mean_err, split_err = [], [], []
    for _ in range(n):
        d = int(rng.integers(2, 4))
        m, s = _rand_gauss(rng, d)
        p = D.DiagGaussianParams(m, s)
        a = D.gaussian_sample(p, rng)
        b = a / np.linalg.norm(a)
        mass, mean = _radial_moments(p, b)
        mass_err.append(abs(mass - 1.0))
        scale = np.abs(D.gaussian_score(p, a).flat()).max()
        mean_err.append(np.abs(mean).max() / scale)
        parts = D.angular_score(p, b).flat() + D.radial_score(p, a).flat()
        split_err.append(np.abs(parts - D.gaussian_score(p, a).flat()).max() / scale)
    return [_worst("polar", "radial conditional mass", mass_err, tol),
            _worst("polar", "E[radial score | direction] = 0", mean_err, tol),
            _worst("polar", "gaussian = angular + radial", split_err, 1e-12)]


# -- clipped-action gap identity ----------------------------------------------

def capg_moments(params, iv, q):
    """Exact (by quadrature) E[q^2 psi^2], E[q^2 psi~^2], E[q^2 (psi - psi~)^2]
    and E[q psi] - E[q psi~] for the mean coordinate, with q a function of
    the clipped action."""
    m, s = float(params.mean[0]), params.sigma
    pdf = lambda a: math.exp(-0.5 * ((a - m) / s) ** 2) / (s * math.sqrt(2.0 * math.pi))

    def psi(a):
        return (a - m) / s**2

    def psi_c(a):
        return float(D.clipped_score(params, iv, np.array(D.clip_action(iv, a))).d_mean[0])

    def moment(fn):
        pts = [iv.lo, iv.hi] + ([m] if iv.lo < m < iv.hi else [])
        lo, hi = m - 14 * s, m + 14 * s
        pts = sorted(p for p in pts if lo < p < hi)
        edges = [lo, *pts, hi]
        return sum(integrate.quad(lambda a: fn(a) * pdf(a), e0, e1, epsabs=1e-13,
                                  epsrel=1e-11, limit=200)[0] for e0, e1 in zip(edges, edges[1:]))

    qq = lambda a: q(min(max(a, iv.lo), iv.hi))
    return (moment(lambda a: (qq(a) * psi(a)) ** 2),
            moment(lambda a: (qq(a) * psi_c(a)) ** 2),
            moment(lambda a: (qq(a) * (psi(a) - psi_c(a))) ** 2),
            moment(lambda a: qq(a) * (psi(a) - psi_c(a))))


def suite_capg(n=20, seed=0, tol=1e-7):
    rng = np.random.default_rng(seed)
    ident, bias, sign = [], [], []
    qs = (lambda b: 1.0, lambda b: 1.0 + b * b, lambda b: math.sin(3.0 * b) + 2.0)
    for i in range(n):
        lo = rng.uniform(-2.0, 0.5)
        iv = D.ClipInterval(lo, lo + rng.uniform(0.2, 3.0))
        p = D.DiagGaussianParams([rng.uniform(-3.0, 3.0)], rng.uniform(0.2, 2.0))
        e1, e2, er, diff = capg_moments(p, iv, qs[i % 3])
        scale = max(e1, 1e-12)
        ident.append(abs((e1 - e2) - er) / scale)
        bias.append(abs(diff) / math.sqrt(scale))
        sign.append(max(0.0, e2 - e1) / scale)
    return [_worst("capg", "gap = E[q^2 (psi - psi~)^2]", ident, tol),
            _worst("capg", "E[q psi] = E[q psi~]", bias, tol),
            _worst("capg", "gap >= 0", sign, 0.0)]


SUITES = {
    "mfun": suite_mfun,
    "grads": suite_grads,
    "normalization": suite_normalization,
    "polar": suite_polar,
    "capg": suite_capg,
}
