"""Compare the compiled and numpy kernel backends.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--batch 64]

Times each hot kernel on LeNet-5 shapes, then one full forward/backward step,
and checks that both backends produce bitwise-identical results.
"""
import argparse
import timeit

import numpy as np
from threadpoolctl import threadpool_limits

from fmricnn.nn import build_network, kernels


def cases(batch, rng):
    x1 = rng.normal(size=(batch, 1, 28, 28))
    x2 = rng.normal(size=(batch, 20, 12, 12))
    c1 = kernels.im2col(x1, 5)
    c2 = kernels.im2col(x2, 5)
    p1 = rng.normal(size=(batch, 20, 24, 24))
    _, arg = kernels.maxpool_forward(p1, 2)
    g = rng.normal(size=(batch, 20, 12, 12))
    return {
        "im2col conv1": lambda: kernels.im2col(x1, 5),
        "im2col conv2": lambda: kernels.im2col(x2, 5),
        "col2im conv1": lambda: kernels.col2im(c1, x1.shape, 5),
        "col2im conv2": lambda: kernels.col2im(c2, x2.shape, 5),
        "maxpool fwd": lambda: kernels.maxpool_forward(p1, 2),
        "maxpool bwd": lambda: kernels.maxpool_backward(g, arg, p1.shape, 2),
    }


def train_step(batch, rng):
    net = build_network(seed=0)
    x = rng.normal(size=(batch, 1, 28, 28))
    y = rng.integers(0, 2, size=batch)
    return lambda: net.loss_and_grad(x, y)


def outputs(batch):
    rng = np.random.default_rng(0)
    out = []
    for f in cases(batch, rng).values():
        r = f()
        out.extend(r if isinstance(r, tuple) else (r,))
    net = build_network(seed=0)
    x = rng.normal(size=(batch, 1, 28, 28))
    net.loss_and_grad(x, rng.integers(0, 2, size=batch))
    out += [g.copy() for _, _, g in net.parameters()]
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--batch", type=int, default=64)
    args = ap.parse_args()

    backends = kernels.available_backends()
    timings = {}
    with threadpool_limits(limits=1):
        for name in backends:
            kernels.use_backend(name)
            rng = np.random.default_rng(0)
            funcs = {**cases(args.batch, rng), "train step": train_step(args.batch, rng)}
            timings[name] = {k: min(timeit.repeat(f, number=1, repeat=args.repeat)) for k, f in funcs.items()}

        if len(backends) == 2:
            results = {}
            for name in backends:
                kernels.use_backend(name)
                results[name] = outputs(args.batch)
            same = all(np.array_equal(a, b) for a, b in zip(*results.values()))
        else:
            same = None

    print(f"batch {args.batch}, best of {args.repeat}, BLAS threads 1")
    print(f"{'kernel':<14}" + "".join(f"{b + ' ms':>12}" for b in backends) + ("     speedup" if len(backends) == 2 else ""))
    for k in timings[backends[0]]:
        row = [timings[b][k] * 1e3 for b in backends]
        line = f"{k:<14}" + "".join(f"{t:>12.2f}" for t in row)
        if len(row) == 2:
            line += f"{row[0] / row[1]:>11.1f}x"
        print(line)
    if same is None:
        print("compiled backend unavailable (not built, or FMRICNN_PURE_PYTHON set); numpy path only")
    else:
        print(f"bitwise identical outputs: {same}")


if __name__ == "__main__":
    main()
