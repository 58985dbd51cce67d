"""Time the compiled kernels against the numpy fallback.

Usage: python3 benchmarks/bench_kernels.py [--repeats 200] [--features 8]
"""
import argparse
import time

import numpy as np

from tnnr import _backend
from tnnr.data import make_split
from tnnr.loops import LoopSampler
from tnnr.nn import AdadeltaState
from tnnr.tnn import TnnModel
from tnnr.training import TrainConfig, combined_step


def best_of(fn, repeats):
    fn()
    times = []
    for _ in range(repeats):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times), float(np.median(times))


def kernel_cases(k, rng, batch, d, hidden):
    X = rng.normal(size=(batch, 2 * d))
    W1 = rng.normal(size=(hidden, 2 * d))
    W2 = rng.normal(size=(hidden, hidden))
    b = np.zeros(hidden)
    h1, h2 = np.empty((batch, hidden)), np.empty((batch, hidden))
    k.dense_forward(X, W1, b, h1, True)
    d_out = rng.normal(size=(batch, hidden))
    g_w, g_b, d_in = np.empty_like(W2), np.empty(hidden), np.empty((batch, hidden))
    n = 2 * d * hidden + hidden * hidden + hidden + 2 * hidden + 1
    p, g = rng.normal(size=n), rng.normal(size=n) * 1e-3
    eg, ed = np.zeros(n), np.zeros(n)
    left = rng.integers(0, 500, size=batch).astype(np.int64)
    right = rng.integers(0, 500, size=batch).astype(np.int64)
    data = rng.normal(size=(500, d))
    pairs = np.empty((batch, 2 * d))
    return {
        "dense_forward": lambda: k.dense_forward(h1, W2, b, h2, True),
        "dense_backward": lambda: k.dense_backward(d_out, h1, W2, g_w, g_b, d_in, True),
        "adadelta_update": lambda: k.adadelta_update(p, g, eg, ed, 0.95, 1e-6, 1.0),
        "gather_pairs": lambda: k.gather_pairs(data, left, right, pairs),
    }


def train_step_case(d, lam):
    rng = np.random.default_rng(1)
    X = rng.uniform(-1, 1, size=(1000, d))
    y = rng.normal(size=1000)
    split = make_split(1000, "T80", seed=0)
    model = TnnModel.create(d, seed=0)
    state = AdadeltaState.for_params(model.params)
    sampler = LoopSampler(split.labelled_train, split.unlabelled_pool, seed=0)
    cfg = TrainConfig(lam=lam)
    batch = sampler.sample(cfg.batch_size)
    return lambda: combined_step(model, batch, X, y, cfg, state)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=200)
    ap.add_argument("--features", type=int, default=2)
    ap.add_argument("--hidden", type=int, default=192)
    ap.add_argument("--batch", type=int, default=48, help="pair rows per call (16 loops x 3)")
    args = ap.parse_args()

    names = ["python"]
    try:
        _backend.get_kernels("cython")
        names.append("cython")
    except ImportError:
        print("compiled extension not built; timing the numpy fallback only")

    results = {}
    for name in names:
        rng = np.random.default_rng(0)
        for case, fn in kernel_cases(_backend.get_kernels(name), rng, args.batch,
                                     args.features, args.hidden).items():
            results[(case, name)] = best_of(fn, args.repeats)
        with _backend.use_backend(name):
            for lam in (0.0, 1.0):
                results[(f"train_step lam={lam:g}", name)] = best_of(
                    train_step_case(args.features, lam), args.repeats)

    cases = list(dict.fromkeys(c for c, _ in results))
    print(f"{'case':<22}" + "".join(f"{n + ' min/med us':>26}" for n in names) + "   speedup")
    for case in cases:
        row = f"{case:<22}"
        for n in names:
            lo, med = results[(case, n)]
            row += f"{lo * 1e6:>15.1f} /{med * 1e6:>8.1f}"
        if len(names) == 2:
            row += f"{results[(case, 'python')][1] / results[(case, 'cython')][1]:>9.2f}x"
        print(row)


if __name__ == "__main__":
    main()
