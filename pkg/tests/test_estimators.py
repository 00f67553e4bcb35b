import math

import numpy as np
import pytest

from mpg import distributions as D
from mpg import nn
from mpg.estimators import (ActionSample, ClippedHead, DirectionalHead, EstimatorKind,
                            NullHead, ParametrizedHead, Policy, WrappedAngleHead,
                            coupled_scores, finite_diff_check, make_head, measure_variance,
                            parametrized_score, pg_estimate, softmax)


def test_kind_parse():
    assert EstimatorKind.parse("Angular") is EstimatorKind.ANGULAR
    assert EstimatorKind.ANGULAR.marginal and not EstimatorKind.STANDARD.marginal
    with pytest.raises(ValueError):
        EstimatorKind.parse("nope")


def test_make_head():
    assert make_head("angular") == DirectionalHead(2, True)
    assert make_head("standard") == DirectionalHead(2, False)
    assert isinstance(make_head("wrapped_angle"), WrappedAngleHead)
    assert make_head("clipped") == ClippedHead(marginal=True)
    assert make_head("standard", "clipped") == ClippedHead(marginal=False)
    assert make_head("parametrized_marginal").marginal


def test_pg_estimate():
    s = np.array([0.3, -1.2])
    np.testing.assert_array_equal(pg_estimate(s, 0.0).grad, 0)
    np.testing.assert_array_equal(pg_estimate(s, 1.0).grad, s)
    J = np.array([[1.0, 2.0, 0.0], [0.0, 1.0, -1.0]])
    np.testing.assert_allclose(pg_estimate(s, 2.0, J).grad, 2.0 * J.T @ s)


def test_parametrized_score_examples():
    sc0 = D.ScoreVector(np.array([[0.4, 0.1]]), np.array([0.2]))
    sc1 = D.ScoreVector(np.array([[0.7]]), np.array([-0.3]))
    out = parametrized_score(np.zeros((1, 2)), np.array([0]), [sc0, sc1])
    np.testing.assert_allclose(out.d_mean, [[0.5, -0.5, 0.4, 0.1, 0.0]])
    assert out.d_sigma[0] == pytest.approx(0.2)
    out = parametrized_score(np.zeros((1, 2)), np.array([1]), [sc0, sc1])
    np.testing.assert_allclose(out.d_mean, [[-0.5, 0.5, 0.0, 0.0, 0.7]])
    # a dimension-0 action contributes an empty block
    empty = NullHead().score(np.zeros((1, 0)), 1.0, None)
    out = parametrized_score(np.zeros((1, 2)), np.array([0]), [empty, sc1])
    assert out.d_mean.shape == (1, 3)
    with pytest.raises(ValueError):
        parametrized_score(np.zeros((1, 2)), np.array([0]), [sc0, sc1], [3, 1])
    with pytest.raises(ValueError):
        parametrized_score(np.zeros((1, 2)), np.array([2]), [sc0, sc1])


def test_softmax_score_matches_finite_differences():
    logits = np.array([0.3, -1.0, 0.8])
    for k in range(3):
        err = finite_diff_check(lambda th, k: math.log(softmax(th)[k]),
                                lambda th, k: np.eye(3)[k] - softmax(th), k, logits)
        assert err <= 1e-8


def test_parametrized_sample_shapes():
    head = ParametrizedHead()
    rng = np.random.default_rng(0)
    out = rng.standard_normal((1000, head.out_dim))
    smp = head.sample(out, 0.3, rng)
    k, (dirs, thr) = smp.executed
    assert set(np.unique(k)) <= {0, 1}
    np.testing.assert_allclose(np.linalg.norm(dirs, axis=-1), 1.0)
    assert np.all(np.abs(thr) <= 1.0)
    assert head.score(out, 0.3, smp).d_mean.shape == (1000, head.out_dim)


def test_policy_identity_and_network_jacobian():
    head = DirectionalHead()
    p = Policy(head, np.array([1.0, 0.5]), 0.2)
    np.testing.assert_array_equal(p.jacobian(None), np.eye(2))
    assert Policy(head, np.array([1.0, 0.5]), 0.2, learn_sigma=True).jacobian(None).shape == (3, 3)
    spec = nn.MlpSpec((2, 4, 2))
    theta = nn.init_params(spec).values
    q = Policy(head, theta, 0.2, spec)
    np.testing.assert_allclose(q.jacobian(np.array([0.1, 0.2])),
                               nn.jacobian(spec, theta, [0.1, 0.2]))


def test_coupled_scores_use_same_draws():
    p = Policy(DirectionalHead(), np.array([1.0, 0.0]), 0.5)
    J, c1, c2 = coupled_scores(p, np.zeros(2), lambda s, x: np.ones(len(x)), 2000,
                               np.random.default_rng(0))
    # the marginal score is the projection of the gaussian one: E[c1 | direction] = c2,
    # so <c1 - c2, c2> averages to zero
    inner = np.sum((c1 - c2) * c2, axis=1)
    assert abs(inner.mean()) <= 4 * inner.std() / math.sqrt(len(inner))


def test_variance_zero_q_and_minimum_n():
    p = Policy(DirectionalHead(), np.array([1.0, 0.0]), 0.1)
    rng = np.random.default_rng(0)
    r = measure_variance(p, np.zeros((1, 2)), lambda s, x: np.zeros(len(x)), 1000, rng, n_boot=20)
    assert r.var_standard == 0.0 and r.var_marginal == 0.0 and r.gap == 0.0
    with pytest.raises(ValueError):
        measure_variance(p, np.zeros((1, 2)), lambda s, x: np.ones(len(x)), 999, rng)


def test_variance_gap_positive_for_constant_q():
    p = Policy(DirectionalHead(), np.array([1.0, 0.0]), 0.1)
    r = measure_variance(p, np.zeros((1, 2)), lambda s, x: np.ones(len(x)), 20000,
                         np.random.default_rng(2), n_boot=200)
    assert r.gap > 3 * r.mc_stderr_gap
    # sigma << |m|: the radial half of the gaussian score is dropped, ratio near 1/2
    assert 0.45 < r.ratio < 0.55
    d = r.to_dict()
    for key in ("var_standard", "var_marginal", "gap", "stderr", "n", "estimator", "seed"):
        assert key in d


def test_finite_diff_check_examples():
    rng = np.random.default_rng(0)
    m, s = rng.standard_normal(3), 0.7
    a = m + s * rng.standard_normal(3)
    split = lambda th: D.DiagGaussianParams(th[:-1], th[-1])
    err = finite_diff_check(lambda th, x: D.gaussian_log_density(split(th), x),
                            lambda th, x: D.gaussian_score(split(th), x).flat(), a, np.append(m, s))
    assert err <= 1e-6
    x = np.array([0.0, 1.0])  # alpha = 0 with m along the first axis
    err = finite_diff_check(lambda th, x: D.angular_log_density(split(th), x),
                            lambda th, x: D.angular_score(split(th), x).flat(), x,
                            np.array([0.9, 0.0, 0.6]))
    assert err <= 1e-5
    iv = D.ClipInterval(-1.0, 1.0)
    th = np.array([2.0, 1.0])  # z = (lo - m) / sigma = -3
    err = finite_diff_check(
        lambda th, b: D.clipped_log_density(D.DiagGaussianParams(th[:1], th[1]), iv, b),
        lambda th, b: D.clipped_score(D.DiagGaussianParams(th[:1], th[1]), iv, b).flat(), -1.0, th)
    assert err <= 1e-5
    with pytest.raises(ValueError):
        finite_diff_check(lambda t, p: 0.0, lambda t, p: 0.0, 0.0, [0.0], h=0.1)
