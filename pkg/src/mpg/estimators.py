"""Policy-gradient estimators and the coupled variance harness.

An *action head* turns network outputs into a sampling distribution,
draws raw actions ``a``, applies the environment transform ``T`` and
returns either the score of the sampling law (standard estimator ``g1``)
or the score of the law of ``T(a)`` (marginal estimator ``g2``).
"""

import enum
import json
from dataclasses import dataclass, field, replace

import numpy as np

from mpg import distributions as dist
from mpg import nn


class EstimatorKind(enum.Enum):
    STANDARD = "standard"
    ANGULAR = "angular"
    CLIPPED = "clipped"
    WRAPPED_ANGLE = "wrapped_angle"
    PARAMETRIZED = "parametrized"
    PARAMETRIZED_MARGINAL = "parametrized_marginal"

    @property
    def marginal(self):
        return self in (EstimatorKind.ANGULAR, EstimatorKind.CLIPPED,
                        EstimatorKind.PARAMETRIZED_MARGINAL)

    @classmethod
    def parse(cls, name):
        try:
            return cls(str(name).strip().lower())
        except ValueError:
            names = ", ".join(k.value for k in cls)
            raise ValueError(f"unknown estimator {name!r} (choose from {names})") from None


@dataclass
class ActionSample:
    raw: object
    executed: object


# -- action heads ------------------------------------------------------------

@dataclass(frozen=True)
class DirectionalHead:
    """a ~ N(m, sigma^2 I) in R^d, executed as a / ||a||."""

    dim: int = 2
    marginal: bool = True

    @property
    def out_dim(self):
        return self.dim

    def with_marginal(self, flag):
        return replace(self, marginal=flag)

    def sample(self, out, sigma, rng):
        a = dist.gaussian_sample(dist.DiagGaussianParams(out, sigma), rng)
        norm = np.linalg.norm(a, axis=-1, keepdims=True)
        return ActionSample(a, a / norm)

    def score(self, out, sigma, sample):
        params = dist.DiagGaussianParams(out, sigma)
        if self.marginal:
            return dist.angular_score(params, sample.executed)
        return dist.gaussian_score(params, sample.raw)


@dataclass(frozen=True)
class WrappedAngleHead:
    """Angle ~ N(m, sigma^2) executed as (cos, sin); no marginal form."""

    marginal: bool = False

    out_dim = 1

    def with_marginal(self, flag):
        return self

    def sample(self, out, sigma, rng):
        angle = out[..., 0] + sigma * rng.standard_normal(out.shape[:-1])
        return ActionSample(angle, dist.wrapped_angle_action(angle))

    def score(self, out, sigma, sample):
        return dist.wrapped_angle_score(out[..., 0], sigma, sample.raw)


@dataclass(frozen=True)
class ClippedHead:
    """a ~ N(m, sigma^2) executed as clip(a, lo, hi)."""

    lo: float = -1.0
    hi: float = 1.0
    marginal: bool = True

    out_dim = 1

    def with_marginal(self, flag):
        return replace(self, marginal=flag)

    def sample(self, out, sigma, rng):
        a = out + sigma * rng.standard_normal(out.shape)
        return ActionSample(a, np.clip(a, self.lo, self.hi))

    def score(self, out, sigma, sample):
        params = dist.DiagGaussianParams(out, sigma)
        if self.marginal:
            return dist.clipped_score(params, dist.ClipInterval(self.lo, self.hi),
                                      sample.executed[..., 0])
        return dist.gaussian_score(params, sample.raw)


@dataclass(frozen=True)
class NullHead:
    """Discrete action without a continuous parameter."""

    marginal: bool = False

    out_dim = 0

    def with_marginal(self, flag):
        return self

    def sample(self, out, sigma, rng):
        empty = np.zeros(out.shape[:-1] + (0,))
        return ActionSample(empty, empty)

    def score(self, out, sigma, sample):
        return dist.ScoreVector(np.zeros(out.shape[:-1] + (0,)), np.zeros(out.shape[:-1]))


def softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def parametrized_score(logits, k, param_scores, param_dims=None):
    """Score of the mixture policy f0(k) f_k(omega).

    ``param_scores`` holds one ScoreVector per discrete action (standard or
    marginal, as the caller chooses); only the block of the taken action
    ``k`` enters, the other parameter blocks are zero.
    """
    logits = np.asarray(logits, dtype=float)
    k = np.asarray(k)
    n_actions = logits.shape[-1]
    if len(param_scores) != n_actions:
        raise ValueError("need one parameter score per discrete action")
    if param_dims is None:
        param_dims = [s.d_mean.shape[-1] for s in param_scores]
    if np.any(k < 0) or np.any(k >= n_actions):
        raise ValueError(f"action index out of range [0, {n_actions})")
    onehot = np.eye(n_actions)[k]
    blocks = [onehot - softmax(logits)]
    d_sigma = np.zeros(np.shape(k))
    for j, (s, dim) in enumerate(zip(param_scores, param_dims)):
        if s.d_mean.shape[-1] != dim:
            raise ValueError(f"parameter block {j} has dimension {s.d_mean.shape[-1]}, "
                             f"expected {dim}")
        chosen = k == j
        blocks.append(np.where(chosen[..., None], s.d_mean, 0.0))
        d_sigma = np.where(chosen, s.d_sigma, d_sigma)
    return dist.ScoreVector(np.concatenate(blocks, axis=-1), d_sigma)


@dataclass(frozen=True)
class ParametrizedHead:
    """Softmax over K discrete actions, each with its own parameter head.

    Network output layout: ``[logits (K) | head_0 means | head_1 means | ...]``.
    All parameter heads share ``sigma``.
    """

    heads: tuple = (DirectionalHead(2), ClippedHead(-1.0, 1.0))
    marginal: bool = True

    def __post_init__(self):
        object.__setattr__(self, "heads",
                           tuple(h.with_marginal(self.marginal) for h in self.heads))

    @property
    def n_actions(self):
        return len(self.heads)

    @property
    def out_dim(self):
        return self.n_actions + sum(h.out_dim for h in self.heads)

    def with_marginal(self, flag):
        return ParametrizedHead(self.heads, flag)

    def _split(self, out):
        parts, pos = [], self.n_actions
        for h in self.heads:
            parts.append(out[..., pos : pos + h.out_dim])
            pos += h.out_dim
        return out[..., : self.n_actions], parts

    def sample(self, out, sigma, rng):
        logits, parts = self._split(out)
        p = softmax(logits)
        u = rng.random(p.shape[:-1])
        k = np.minimum((np.cumsum(p, axis=-1) < u[..., None]).sum(axis=-1), self.n_actions - 1)
        subs = [h.sample(part, sigma, rng) for h, part in zip(self.heads, parts)]
        return ActionSample((k, [s.raw for s in subs]), (k, [s.executed for s in subs]))

    def score(self, out, sigma, sample):
        logits, parts = self._split(out)
        k, raws = sample.raw
        _, execs = sample.executed
        scores = [h.score(part, sigma, ActionSample(r, e))
                  for h, part, r, e in zip(self.heads, parts, raws, execs)]
        return parametrized_score(logits, k, scores, [h.out_dim for h in self.heads])


def make_head(kind, action_kind="direction"):
    """Head for an estimator kind; ``action_kind`` names the environment's action type."""
    kind = EstimatorKind.parse(kind) if isinstance(kind, str) else kind
    if kind is EstimatorKind.WRAPPED_ANGLE:
        return WrappedAngleHead()
    if kind in (EstimatorKind.PARAMETRIZED, EstimatorKind.PARAMETRIZED_MARGINAL):
        return ParametrizedHead(marginal=kind.marginal)
    if kind is EstimatorKind.CLIPPED or (kind is EstimatorKind.STANDARD and action_kind == "clipped"):
        return ClippedHead(marginal=kind.marginal)
    return DirectionalHead(2, marginal=kind.marginal)


# -- policies and gradient estimates ---------------------------------------

@dataclass
class Policy:
    """Mean model plus shared scale.

    ``spec is None`` means the identity parametrization: the parameter
    vector *is* the head's output and the state is ignored.
    """

    head: object
    params: np.ndarray
    sigma: float
    spec: nn.MlpSpec = None
    learn_sigma: bool = False

    def outputs(self, states):
        states = np.atleast_2d(np.asarray(states, dtype=float))
        if self.spec is None:
            return np.broadcast_to(self.params, (states.shape[0], self.params.shape[0])).copy()
        return nn.forward(self.spec, self.params, states)

    def jacobian(self, state):
        """d (outputs[, sigma]) / d theta at one state."""
        if self.spec is None:
            J = np.eye(self.params.shape[0])
        else:
            J = nn.jacobian(self.spec, self.params, state)
        if self.learn_sigma:
            k, p = J.shape
            J = np.block([[J, np.zeros((k, 1))], [np.zeros((1, p)), np.ones((1, 1))]])
        return J

    def score_block(self, score):
        """Score coordinates matched to the rows of :meth:`jacobian`."""
        return score.flat() if self.learn_sigma else score.d_mean

    def with_head(self, head):
        return replace(self, head=head)


@dataclass
class GradSample:
    grad: np.ndarray
    weight: float


def pg_estimate(score, q, jacobian=None):
    """``q`` times the score chained through ``jacobian`` (identity if None)."""
    score = np.asarray(score, dtype=float)
    q = float(q)
    grad = score if jacobian is None else np.asarray(jacobian).T @ score
    return GradSample(q * grad, q)


@dataclass
class VarianceReport:
    var_standard: float
    var_marginal: float
    gap: float
    mc_stderr_gap: float
    n_samples: int
    radial_term: float = float("nan")
    estimator: str = ""
    seed: object = None
    q_source: str = ""
    extra: dict = field(default_factory=dict)

    @property
    def ratio(self):
        return self.var_marginal / self.var_standard if self.var_standard else float("nan")

    def to_dict(self):
        out = {
            "var_standard": self.var_standard,
            "var_marginal": self.var_marginal,
            "gap": self.gap,
            "stderr": self.mc_stderr_gap,
            "n": self.n_samples,
            "estimator": self.estimator,
            "seed": self.seed,
            "ratio": self.ratio,
            "radial_term": self.radial_term,
            "q_source": self.q_source,
        }
        out.update(self.extra)
        return out

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


MIN_VARIANCE_SAMPLES = 1000


def coupled_scores(policy, state, q_fn, n, rng):
    """Draw ``n`` actions at one state and return ``(J, c1, c2)``.

    ``c1``/``c2`` are q-scaled score blocks of the standard and marginal
    estimators on the *same* draws; the gradient samples are ``c @ J``.
    """
    std = policy.head.with_marginal(False)
    marg = policy.head.with_marginal(True)
    out = np.repeat(policy.outputs(state), n, axis=0)
    sample = policy.head.sample(out, policy.sigma, rng)
    q = np.asarray(q_fn(state, sample.executed), dtype=float).reshape(n)
    c1 = q[:, None] * policy.score_block(std.score(out, policy.sigma, sample))
    c2 = q[:, None] * policy.score_block(marg.score(out, policy.sigma, sample))
    return policy.jacobian(state), c1, c2


def _pooled_stats(idx, state_of, sq1, sq2, sqr, c1, c2, K, n_states, width):
    n = idx.shape[0]
    s_idx = state_of[idx]
    sums1 = np.stack([np.bincount(s_idx, c1[idx, j], n_states) for j in range(width)], 1)
    sums2 = np.stack([np.bincount(s_idx, c2[idx, j], n_states) for j in range(width)], 1)
    v1, v2 = sums1.ravel() / n, sums2.ravel() / n
    var1 = sq1[idx].mean() - v1 @ K @ v1
    var2 = sq2[idx].mean() - v2 @ K @ v2
    return var1, var2, sqr[idx].mean()


def measure_variance(policy, states, q_fn, n, rng, n_boot=1000, estimator="", seed=None,
                     q_source="custom"):
    """Trace variances of the standard and marginal estimators on coupled draws.

    ``n`` actions are drawn at every state; both estimators are evaluated
    on each draw. Variances pool all (state, action) pairs. The gap's
    standard error comes from a nonparametric bootstrap over the pairs.
    ``radial_term`` is the direct estimate of ``E[q^2 ||g1 - g2||^2]``.
    """
    if n < MIN_VARIANCE_SAMPLES:
        raise ValueError(f"need at least {MIN_VARIANCE_SAMPLES} draws per state, got {n}")
    states = np.atleast_2d(np.asarray(states, dtype=float))
    Js, c1s, c2s = [], [], []
    for s in states:
        J, c1, c2 = coupled_scores(policy, s, q_fn, n, rng)
        Js.append(J)
        c1s.append(c1)
        c2s.append(c2)
    n_states, width = len(Js), Js[0].shape[0]
    # Gram blocks J_s J_t^T give every inner product in parameter space.
    Jall = np.concatenate(Js, axis=0)
    K = Jall @ Jall.T
    c1 = np.concatenate(c1s)
    c2 = np.concatenate(c2s)
    state_of = np.repeat(np.arange(n_states), n)
    G = np.stack([K[i * width:(i + 1) * width, i * width:(i + 1) * width] for i in range(n_states)])
    Gs = G[state_of]
    dc = c1 - c2
    sq1 = np.einsum("ni,nij,nj->n", c1, Gs, c1)
    sq2 = np.einsum("ni,nij,nj->n", c2, Gs, c2)
    sqr = np.einsum("ni,nij,nj->n", dc, Gs, dc)
    total = n_states * n
    var1, var2, radial = _pooled_stats(np.arange(total), state_of, sq1, sq2, sqr, c1, c2, K,
                                       n_states, width)
    gaps = np.empty(n_boot)
    for b in range(n_boot):
        idx = rng.integers(0, total, total)
        v1, v2, _ = _pooled_stats(idx, state_of, sq1, sq2, sqr, c1, c2, K, n_states, width)
        gaps[b] = v1 - v2
    stderr = float(gaps.std(ddof=1)) if n_boot > 1 else float("nan")
    return VarianceReport(float(var1), float(var2), float(var1 - var2), stderr, total,
                          radial_term=float(radial), estimator=estimator, seed=seed,
                          q_source=q_source)


def finite_diff_check(log_density_fn, score_fn, point, params, h=1e-5):
    """Worst relative error between an analytic score and central differences.

    ``log_density_fn(theta, point)`` and ``score_fn(theta, point)`` take a
    flat parameter vector. The error is normalised by the largest score
    component, so exactly-zero components do not blow up.
    """
    if not 1e-8 < h < 1e-2:
        raise ValueError("h must lie in (1e-8, 1e-2)")
    theta = np.asarray(params, dtype=float)
    analytic = np.asarray(score_fn(theta, point), dtype=float).ravel()
    numeric = np.empty_like(theta)
    for i in range(theta.shape[0]):
        e = np.zeros_like(theta)
        e[i] = h
        numeric[i] = (float(log_density_fn(theta + e, point))
                      - float(log_density_fn(theta - e, point))) / (2.0 * h)
    scale = max(float(np.max(np.abs(analytic))), 1e-8)
    return float(np.max(np.abs(numeric - analytic)) / scale)
