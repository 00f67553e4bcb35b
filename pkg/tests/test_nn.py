import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mpg import nn
from mpg.estimators import finite_diff_check


def test_spec_validation():
    with pytest.raises(ValueError):
        nn.MlpSpec((3,))
    with pytest.raises(ValueError):
        nn.MlpSpec((3, 0, 2))
    with pytest.raises(ValueError):
        nn.MlpSpec((3, 2), activation="relu")
    assert nn.MlpSpec((2, 32, 32, 2)).n_params == 96 + 1056 + 66


def test_flat_params_layout_checked():
    spec = nn.MlpSpec((2, 3))
    with pytest.raises(ValueError):
        nn.FlatParams(np.zeros(5), spec.layout())


def test_zero_weights_zero_output():
    spec = nn.MlpSpec((3, 4, 2))
    np.testing.assert_array_equal(nn.forward(spec, np.zeros(spec.n_params), [1.0, -2.0, 3.0]), 0)


def test_identity_layer():
    spec = nn.MlpSpec((3, 3), activation="identity")
    theta = np.concatenate([np.eye(3).ravel(), np.zeros(3)])
    x = np.array([[0.5, -1.0, 2.0], [3.0, 0.0, 1.0]])
    np.testing.assert_array_equal(nn.forward(spec, theta, x), x)


def test_forward_hand_computed():
    spec = nn.MlpSpec((2, 2, 1), activation="tanh")
    W1, b1 = np.array([[1.0, -1.0], [0.5, 2.0]]), np.array([0.1, -0.2])
    W2, b2 = np.array([[2.0, -3.0]]), np.array([0.7])
    theta = np.concatenate([W1.ravel(), b1, W2.ravel(), b2])
    x = np.array([0.3, -0.4])
    want = W2 @ np.tanh(W1 @ x + b1) + b2
    np.testing.assert_allclose(nn.forward(spec, theta, x), want, rtol=1e-15)


def test_backward_zero_upstream():
    spec = nn.MlpSpec((2, 5, 3))
    theta = nn.init_params(spec).values
    np.testing.assert_array_equal(nn.backward(spec, theta, [0.1, 0.2], np.zeros(3)), 0)
    with pytest.raises(ValueError):
        nn.backward(spec, theta, [0.1, 0.2], np.zeros(2))


@settings(max_examples=50, deadline=None)
@given(widths=st.lists(st.integers(1, 6), min_size=2, max_size=4),
       act=st.sampled_from(["tanh", "selu", "identity"]), seed=st.integers(0, 2**20))
def test_backward_matches_finite_differences(widths, act, seed):
    spec = nn.MlpSpec(tuple(widths), act, seed)
    rng = np.random.default_rng(seed)
    theta = nn.init_params(spec).values
    x = rng.standard_normal(spec.n_inputs)
    u = rng.standard_normal(spec.n_outputs)
    err = finite_diff_check(lambda th, x: u @ nn.forward(spec, th, x),
                            lambda th, x: nn.backward(spec, th, x, u), x, theta)
    assert err <= 1e-5


def test_batched_backward_sums_rows():
    spec = nn.MlpSpec((2, 4, 2), "selu", 3)
    theta = nn.init_params(spec).values
    rng = np.random.default_rng(0)
    X, U = rng.standard_normal((5, 2)), rng.standard_normal((5, 2))
    total = sum(nn.backward(spec, theta, X[i], U[i]) for i in range(5))
    np.testing.assert_allclose(nn.backward(spec, theta, X, U), total, rtol=1e-12, atol=1e-14)


def test_jacobian_rows_are_backward():
    spec = nn.MlpSpec((2, 4, 3), "tanh", 1)
    theta = nn.init_params(spec).values
    J = nn.jacobian(spec, theta, [0.2, -0.5])
    assert J.shape == (3, spec.n_params)
    for j in range(3):
        np.testing.assert_allclose(J[j], nn.backward(spec, theta, [0.2, -0.5], np.eye(3)[j]))


def test_init_is_seeded_and_bounded():
    spec = nn.MlpSpec((4, 8, 1), seed=7)
    a, b = nn.init_params(spec).values, nn.init_params(spec).values
    np.testing.assert_array_equal(a, b)
    assert np.all(np.abs(a[: 4 * 8 + 8]) <= 0.5)


def test_sgd():
    p = np.array([1.0, 2.0])
    np.testing.assert_array_equal(nn.sgd_step(p, np.zeros(2), 0.1), p)
    np.testing.assert_array_equal(nn.sgd_step(p, [1.0, 0.0], 1.0), [2.0, 2.0])
    with pytest.raises(ValueError):
        nn.sgd_step(p, p, 0.0)


def test_adam():
    state, p = nn.AdamState.zeros(3), np.array([1.0, -1.0, 0.5])
    s, q = nn.adam_step(state, p, np.zeros(3), 0.01)
    np.testing.assert_array_equal(q, p)
    g = np.array([3.0, -0.02, 0.0])
    s = nn.AdamState.zeros(3)
    for _ in range(200):
        s, new = nn.adam_step(s, p, g, 0.01)
        step = new - p
        p = new
    # constant gradient: step -> sign(g) lr (zero stays zero)
    np.testing.assert_allclose(step, 0.01 * np.sign(g), rtol=1e-5, atol=1e-12)


def test_checkpoint_roundtrip(tmp_path):
    a = nn.MlpSpec((2, 3, 2), "selu", 4)
    b = nn.MlpSpec((2, 1), "identity", 5)
    pa, pb = nn.init_params(a), nn.init_params(b)
    path = tmp_path / "net.ckpt"
    nn.save_checkpoint(path, {"actor": (a, pa), "critic": (b, pb)}, {"sigma": 0.1})
    nets, extra = nn.load_checkpoint(path)
    assert extra == {"sigma": 0.1}
    assert nets["actor"][0] == a and nets["critic"][0] == b
    np.testing.assert_array_equal(nets["actor"][1].values, pa.values)
    np.testing.assert_array_equal(nets["critic"][1].values, pb.values)
    (tmp_path / "bad").write_text("nope\n")
    with pytest.raises(ValueError):
        nn.load_checkpoint(tmp_path / "bad")
