"""Small feed-forward networks with exact reverse-mode gradients.

Parameters live in one flat vector (see ``mpg._pykernels`` for the layout)
so optimizers and checkpoints handle a plain array.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from mpg import kernels

CHECKPOINT_MAGIC = "mpg-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class MlpSpec:
    """Network shape. ``layer_widths`` includes input and output widths."""

    layer_widths: tuple
    activation: str = "tanh"
    seed: int = 0

    def __post_init__(self):
        widths = tuple(int(w) for w in self.layer_widths)
        if len(widths) < 2:
            raise ValueError("an MLP needs at least one layer (two widths)")
        if any(w <= 0 for w in widths):
            raise ValueError(f"layer widths must be positive, got {widths}")
        if self.activation not in kernels.ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        object.__setattr__(self, "layer_widths", widths)

    @property
    def n_inputs(self):
        return self.layer_widths[0]

    @property
    def n_outputs(self):
        return self.layer_widths[-1]

    def layout(self):
        """(weight_offset, bias_offset, fan_out, fan_in) per layer."""
        out, pos = [], 0
        for fan_in, fan_out in zip(self.layer_widths[:-1], self.layer_widths[1:]):
            out.append((pos, pos + fan_out * fan_in, fan_out, fan_in))
            pos += fan_out * fan_in + fan_out
        return out

    @property
    def n_params(self):
        return sum(o * i + o for _, _, o, i in self.layout())

    def to_dict(self):
        return {"layer_widths": list(self.layer_widths), "activation": self.activation,
                "seed": self.seed}


@dataclass
class FlatParams:
    values: np.ndarray
    layout: list = field(default_factory=list)

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=float)
        if self.layout:
            w_off, b_off, o, i = self.layout[-1]
            if b_off + o != self.values.shape[0] or self.layout[0][0] != 0:
                raise ValueError("layout offsets do not partition the parameter vector")

    def weights(self, layer):
        w_off, _, o, i = self.layout[layer]
        return self.values[w_off : w_off + o * i].reshape(o, i)

    def bias(self, layer):
        _, b_off, o, _ = self.layout[layer]
        return self.values[b_off : b_off + o]


def init_params(spec):
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases."""
    rng = np.random.default_rng(spec.seed)
    values = np.empty(spec.n_params)
    for w_off, b_off, o, i in spec.layout():
        bound = 1.0 / np.sqrt(i)
        values[w_off : b_off + o] = rng.uniform(-bound, bound, size=o * i + o)
    return FlatParams(values, spec.layout())


def _as_batch(x, width):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != width:
        raise ValueError(f"expected input width {width}, got {x.shape[1]}")
    return x, single


def _values(params):
    return params.values if isinstance(params, FlatParams) else np.ascontiguousarray(params, float)


def forward_cache(spec, params, x):
    x, _ = _as_batch(x, spec.n_inputs)
    act = kernels.ACTIVATIONS[spec.activation]
    return kernels.mlp_forward(_values(params), spec.layer_widths, act, x)


def forward(spec, params, x):
    """Network output; final layer is linear."""
    x_arr, single = _as_batch(x, spec.n_inputs)
    out = forward_cache(spec, params, x_arr)[:, -spec.n_outputs :]
    return out[0] if single else out


def backward(spec, params, x, upstream, cache=None):
    """Gradient of ``sum_i upstream_i . output_i`` w.r.t. the flat parameters."""
    x_arr, _ = _as_batch(x, spec.n_inputs)
    upstream = np.atleast_2d(np.asarray(upstream, dtype=float))
    if upstream.shape != (x_arr.shape[0], spec.n_outputs):
        raise ValueError(f"upstream shape {upstream.shape} does not match output "
                         f"{(x_arr.shape[0], spec.n_outputs)}")
    H = forward_cache(spec, params, x_arr) if cache is None else cache
    act = kernels.ACTIVATIONS[spec.activation]
    return kernels.mlp_backward(_values(params), spec.layer_widths, act, H, upstream)


def jacobian(spec, params, x):
    """d output / d theta at a single input, shape (n_outputs, n_params)."""
    x_arr, _ = _as_batch(x, spec.n_inputs)
    k = spec.n_outputs
    xs = np.repeat(x_arr[:1], k, axis=0)
    H = forward_cache(spec, params, xs)
    act = kernels.ACTIVATIONS[spec.activation]
    eye = np.eye(k)
    return np.stack([
        kernels.mlp_backward(_values(params), spec.layer_widths, act, H[j : j + 1], eye[j : j + 1])
        for j in range(k)
    ])


def sgd_step(params, grad, lr):
    """theta + lr * grad (ascent; pass a negated gradient to descend)."""
    if lr <= 0:
        raise ValueError("learning rate must be positive")
    return _values(params) + lr * np.asarray(grad, dtype=float)


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, n):
        return cls(np.zeros(n), np.zeros(n), 0)


def adam_step(state, params, grad, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """Bias-corrected Adam ascent step. Returns ``(new_state, new_params)``."""
    grad = np.asarray(grad, dtype=float)
    t = state.t + 1
    m = beta1 * state.m + (1.0 - beta1) * grad
    v = beta2 * state.v + (1.0 - beta2) * grad * grad
    m_hat = m / (1.0 - beta1**t)
    v_hat = v / (1.0 - beta2**t)
    new = _values(params) + lr * m_hat / (np.sqrt(v_hat) + eps)
    return AdamState(m, v, t), new


def save_checkpoint(path, nets, extra=None):
    """Write named networks to a plain-text checkpoint.

    ``nets`` maps a name to ``(spec, params)``. Values are written with
    ``repr`` so a reload is bit-exact.
    """
    header = {
        "version": CHECKPOINT_VERSION,
        "nets": {name: spec.to_dict() for name, (spec, _) in nets.items()},
        "extra": extra or {},
    }
    with open(path, "w") as fh:
        fh.write(f"{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}\n")
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for name, (spec, params) in nets.items():
            values = _values(params)
            fh.write(f"{name} {values.shape[0]}\n")
            fh.writelines(repr(float(v)) + "\n" for v in values)


def load_checkpoint(path):
    """Inverse of :func:`save_checkpoint`: returns ``(nets, extra)``."""
    with open(path) as fh:
        magic = fh.readline().split()
        if len(magic) != 2 or magic[0] != CHECKPOINT_MAGIC:
            raise ValueError(f"{path} is not an mpg checkpoint")
        if int(magic[1]) != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {magic[1]}")
        header = json.loads(fh.readline())
        nets = {}
        for _ in header["nets"]:
            name, count = fh.readline().split()
            sd = header["nets"][name]
            spec = MlpSpec(tuple(sd["layer_widths"]), sd["activation"], sd["seed"])
            values = np.array([float(fh.readline()) for _ in range(int(count))])
            if values.shape[0] != spec.n_params:
                raise ValueError(f"checkpoint block {name!r} has wrong length")
            nets[name] = (spec, FlatParams(values, spec.layout()))
    return nets, header.get("extra", {})
