"""Time one training run per architecture on the compiled and the NumPy epoch kernels.

    python3 benchmarks/bench_kernels.py [--epochs 20] [--repeats 3]
"""

import argparse
import time

import numpy as np

from coevo import _kernels
from coevo.architecture import DecodedArchitecture
from coevo.market_data import FeatureDataset
from coevo.neural_model import TrainConfig, init_weights, train

SHAPES = [
    ((8, "tansig"), (0, "tansig")),
    ((32, "tansig"), (16, "logsig")),
    ((96, "tansig"), (96, "logsig")),
    ((128, "logsig"), (128, "tansig")),
]


def dataset(n=440, d=68, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, d))
    y = (X[:, 0] + 0.5 * rng.standard_normal(n) > 0).astype(int)
    return FeatureDataset([f"f{i}" for i in range(d)], X, y, np.arange(n).astype("datetime64[D]"))


def best_of(fn, repeats):
    times = []
    for _ in range(repeats):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return min(times), out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--epochs", type=int, default=20)
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args()
    if _kernels.compiled_run_epoch is None:
        raise SystemExit("compiled kernel not built; run `python3 setup.py build_ext --inplace`")
    ds = dataset()
    cfg = TrainConfig(max_epochs=args.epochs, patience=args.epochs + 1)
    print(f"{'hidden layers':<28}{'python ms':>11}{'cython ms':>11}{'speedup':>9}{'max |dw|':>11}")
    for layers in SHAPES:
        arch = DecodedArchitecture(tuple(range(0, 68, 2)), layers)
        w0 = init_weights(arch, 1)
        tp, wp = best_of(lambda: train(arch, w0, ds, cfg, backend=_kernels.python_run_epoch), args.repeats)
        tc, wc = best_of(lambda: train(arch, w0, ds, cfg, backend=_kernels.compiled_run_epoch), args.repeats)
        label = " / ".join(f"{s} {f}" for s, f in layers if s)
        diff = float(np.max(np.abs(wp.flat() - wc.flat())))
        print(f"{label:<28}{tp * 1e3:>11.1f}{tc * 1e3:>11.1f}{tp / tc:>8.1f}x{diff:>11.1e}")


if __name__ == "__main__":
    main()
