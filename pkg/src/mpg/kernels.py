"""Backend selection for the hot kernels.

The compiled ``_core`` extension is preferred; the numpy implementation in
``_pykernels`` is used when it is missing or when ``MPG_BACKEND=python``.

The compiled MLP kernels are scalar loops. They win on the trainer's
per-step calls (one row per worker) but lose to numpy's BLAS and SIMD
``tanh`` on the big update batches, so the cython backend hands batches
above a crossover to numpy. Crossovers were measured with
``benchmarks/bench_kernels.py``.
"""

import os

from mpg import _pykernels

IDENTITY, TANH, SELU = _pykernels.IDENTITY, _pykernels.TANH, _pykernels.SELU
ACTIVATIONS = {"identity": IDENTITY, "tanh": TANH, "selu": SELU}
BACKENDS = ("auto", "cython", "python")

FORWARD_CROSSOVER = 16
BACKWARD_CROSSOVER = 48


def _load(name):
    if name not in BACKENDS:
        raise ValueError(f"unknown backend {name!r} (choose from {', '.join(BACKENDS)})")
    if name == "python":
        return None, "python"
    try:
        from mpg import _core
    except ImportError:
        if name == "cython":
            raise
        return None, "python"
    return _core, "cython"


def _bind(core):
    if core is None:
        return _pykernels.mlp_forward, _pykernels.mlp_backward, _pykernels.m_ratio_array

    def mlp_forward(theta, widths, act, X):
        if X.shape[0] <= FORWARD_CROSSOVER:
            return core.mlp_forward(theta, widths, act, X)
        return _pykernels.mlp_forward(theta, widths, act, X)

    def mlp_backward(theta, widths, act, H, G):
        if G.shape[0] <= BACKWARD_CROSSOVER:
            return core.mlp_backward(theta, widths, act, H, G)
        return _pykernels.mlp_backward(theta, widths, act, H, G)

    return mlp_forward, mlp_backward, core.m_ratio_array


def use_backend(name):
    """Switch backend at runtime ('cython', 'python' or 'auto')."""
    global BACKEND, mlp_forward, mlp_backward, m_ratio_array
    core, BACKEND = _load(name)
    mlp_forward, mlp_backward, m_ratio_array = _bind(core)
    return BACKEND


BACKEND = None
mlp_forward = mlp_backward = m_ratio_array = None
use_backend(os.environ.get("MPG_BACKEND", "auto").lower())
