"""Pure numpy implementations of the hot kernels.

Same signatures as the compiled ``_core`` module; used when the extension
is unavailable or ``MPG_BACKEND=python`` is set.

Parameter layout for an MLP with widths ``w_0..w_L``: for each layer the
weight matrix ``(w_{l+1}, w_l)`` in row-major order, followed by the bias.
Activations buffer ``H`` has shape ``(n, sum(widths))`` and stores the input
and the output of every layer side by side.
"""

import numpy as np

from mpg.special import m_ratio_array  # noqa: F401  (re-exported)

IDENTITY, TANH, SELU = 0, 1, 2
SELU_SCALE = 1.0507009873554805
SELU_ALPHA = 1.6732632423543772


def _activate(z, act):
    if act == TANH:
        return np.tanh(z)
    if act == SELU:
        return SELU_SCALE * np.where(z > 0.0, z, SELU_ALPHA * np.expm1(np.minimum(z, 0.0)))
    return z


def _activate_grad(y, act):
    """Derivative of the activation expressed through its output ``y``."""
    if act == TANH:
        return 1.0 - y * y
    if act == SELU:
        return np.where(y > 0.0, SELU_SCALE, y + SELU_SCALE * SELU_ALPHA)
    return np.ones_like(y)


def mlp_forward(theta, widths, act, X):
    n = X.shape[0]
    H = np.empty((n, int(np.sum(widths))))
    H[:, : widths[0]] = X
    pos, col = 0, 0
    a = X
    nlayers = len(widths) - 1
    for l in range(nlayers):
        fan_in, fan_out = widths[l], widths[l + 1]
        W = theta[pos : pos + fan_out * fan_in].reshape(fan_out, fan_in)
        pos += fan_out * fan_in
        b = theta[pos : pos + fan_out]
        pos += fan_out
        z = a @ W.T + b
        a = _activate(z, act) if l < nlayers - 1 else z
        col += fan_in
        H[:, col : col + fan_out] = a
    return H


def mlp_backward(theta, widths, act, H, G):
    grad = np.empty_like(theta)
    nlayers = len(widths) - 1
    offsets = np.concatenate([[0], np.cumsum(widths)])
    pos = theta.shape[0]
    delta = G
    for l in range(nlayers - 1, -1, -1):
        fan_in, fan_out = widths[l], widths[l + 1]
        a_prev = H[:, offsets[l] : offsets[l] + fan_in]
        pos -= fan_out
        grad[pos : pos + fan_out] = delta.sum(axis=0)
        pos -= fan_out * fan_in
        grad[pos : pos + fan_out * fan_in] = (delta.T @ a_prev).ravel()
        if l > 0:
            W = theta[pos : pos + fan_out * fan_in].reshape(fan_out, fan_in)
            delta = (delta @ W) * _activate_grad(a_prev, act)
    return grad
