"""Compare the compiled and numpy convolution kernels.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]

Times im2col, col2im and one full forward+backward pass of the toy model
under each available backend.  Shapes match the layers of the default toy
network (32x32 input, widths 16/32/32).
"""
import argparse
import time
import timeit

import numpy as np

from spectradet import kernels
from spectradet import tensor as T

SHAPES = [
    # (C, H, W, k, stride, pad)
    (3, 32, 32, 3, 1, 1),
    (16, 32, 32, 3, 2, 1),
    (32, 16, 16, 3, 2, 1),
    (32, 8, 8, 3, 1, 1),
]


def bench_kernel(backend, shape, repeat):
    C, H, W, k, s, p = shape
    mod = kernels.get_backend(backend)
    x = np.random.default_rng(0).normal(size=(C, H, W))
    cols = mod.im2col(x, k, k, s, p)
    t_fwd = min(timeit.repeat(lambda: mod.im2col(x, k, k, s, p), number=50, repeat=repeat)) / 50
    t_bwd = min(timeit.repeat(lambda: mod.col2im(cols, C, H, W, k, k, s, p), number=50, repeat=repeat)) / 50
    return t_fwd, t_bwd


def bench_model(backend, repeat):
    from spectradet.unidet import LossWeights, make_dataset
    from spectradet.unidet.model import ModelConfig, ToyModel
    from spectradet.unidet.train import batch_losses

    saved = kernels._impl
    kernels._impl = kernels.get_backend(backend)
    try:
        model = ToyModel.init(ModelConfig(), np.random.default_rng(0))
        batch = make_dataset(4, seed=0)

        def step():
            with T.Tape() as tape:
                report, _ = batch_losses(model, batch, LossWeights(), "train", np.random.default_rng(0))
            T.gradients(tape, report.total, model.parameters())

        step()
        best = float("inf")
        for _ in range(repeat):
            t0 = time.perf_counter()
            step()
            best = min(best, time.perf_counter() - t0)
        return best / len(batch)
    finally:
        kernels._impl = saved


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backends = sorted(kernels.BACKENDS)
    print(f"backends: {', '.join(backends)} (active: {kernels.BACKEND})")
    print(f"{'shape (C,H,W,k,s,p)':<24}" + "".join(f"{b + ' im2col':>16}{b + ' col2im':>16}" for b in backends))
    for shape in SHAPES:
        row = f"{str(shape):<24}"
        for b in backends:
            f, g = bench_kernel(b, shape, args.repeat)
            row += f"{f * 1e6:>13.1f} us{g * 1e6:>13.1f} us"
        print(row)
    for b in backends:
        print(f"toy model forward+backward, {b:>6}: {bench_model(b, args.repeat) * 1e3:7.2f} ms/sample")


if __name__ == "__main__":
    main()
