"""Compiled core vs numpy fallback: per-kernel timings and a short training run.

    python benchmarks/bench_kernels.py [--episodes 300] [--repeat 200]
"""

import argparse
import time
import timeit

import numpy as np

from mpg import _pykernels, kernels
from mpg.trainer import TrainConfig, train

try:
    from mpg import _core
except ImportError:  # extension not built
    _core = None

WIDTHS = (2, 32, 32, 2)


def kernel_rows(repeat):
    rng = np.random.default_rng(0)
    n_params = sum(o * i + o for i, o in zip(WIDTHS[:-1], WIDTHS[1:]))
    theta = rng.standard_normal(n_params) * 0.3
    impls = {"python": _pykernels}
    if _core is not None:
        impls["cython"] = _core
    rows = []
    for batch in (4, 80):
        X = rng.standard_normal((batch, WIDTHS[0]))
        G = rng.standard_normal((batch, WIDTHS[-1]))
        alpha = rng.uniform(-8, 8, batch)
        H = _pykernels.mlp_forward(theta, WIDTHS, kernels.TANH, X)
        for name, mod in impls.items():
            cases = {
                "mlp_forward": lambda: mod.mlp_forward(theta, WIDTHS, kernels.TANH, X),
                "mlp_backward": lambda: mod.mlp_backward(theta, WIDTHS, kernels.TANH, H, G),
                "m_ratio_array": lambda: mod.m_ratio_array(2, alpha),
            }
            for kern, fn in cases.items():
                t = min(timeit.repeat(fn, number=repeat, repeat=3)) / repeat
                rows.append((kern, batch, name, t * 1e6))
    return rows


def training_rows(episodes):
    rows = []
    before = kernels.BACKEND
    for name in ("python", "cython"):
        if name == "cython" and _core is None:
            continue
        kernels.use_backend(name)
        t0 = time.perf_counter()
        recs = train(TrainConfig(episodes=episodes, seed=0))
        rows.append((name, time.perf_counter() - t0, sum(r.steps for r in recs)))
    kernels.use_backend(before)
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--episodes", type=int, default=300)
    ap.add_argument("--repeat", type=int, default=200)
    args = ap.parse_args()
    if _core is None:
        print("compiled core not built; only the numpy fallback is timed")
    print(f"{'kernel':<15}{'batch':>6}  {'backend':<8}{'us/call':>10}")
    for kern, batch, name, us in kernel_rows(args.repeat):
        print(f"{kern:<15}{batch:>6}  {name:<8}{us:>10.1f}")
    print()
    print(f"A2C on Platform2D, {args.episodes} episodes, 4 workers")
    for name, secs, steps in training_rows(args.episodes):
        print(f"  {name:<8}{secs:>7.2f} s  ({steps} env steps, {1e6 * secs / steps:.0f} us/step)")


if __name__ == "__main__":
    main()
