"""Head-to-head timing of the compiled and numpy kernel backends.

Run from the repo root after an editable install:

    python3 benchmarks/bench_kernels.py
    python3 benchmarks/bench_kernels.py --repeats 9

Both backends are imported directly, so the RULFORGE_KERNELS override does
not matter here. Do not assume the compiled route wins: the numpy
convolution rides tensordot straight into BLAS and has beaten the explicit
loops on every machine tried so far, while the compiled pooling kernel wins
by an order of magnitude because pooling is all branching and no algebra.
The table reports whatever this machine measures.
"""

import argparse
import time

import numpy as np

from rulforge.kernels import available_backends

# batch, length, in channels, kernel, out channels, pool
SHAPES = [
    (32, 30, 14, 5, 10, 2),
    (256, 30, 14, 5, 10, 2),
    (32, 128, 32, 7, 32, 4),
    (8, 512, 64, 9, 64, 4),
]


def _best_of(fn, repeats: int) -> float:
    fn()  # warm-up outside the clock
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def _cases(rng, shape):
    batch, length, cin, k, cout, pool = shape
    x = rng.normal(size=(batch, length, cin))
    w = rng.normal(size=(k, cin, cout))
    b = rng.normal(size=cout)
    grad = rng.normal(size=(batch, length - k + 1, cout))
    return [
        ("conv_fwd", lambda m: m.conv1d_forward(x, w, b)),
        ("conv_bwd", lambda m: m.conv1d_backward(x, w, grad)),
        ("pool_fwd", lambda m: m.maxpool1d_forward(x, pool)),
    ]


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=7, help="timing repeats per cell")
    args = parser.parse_args()

    backends = available_backends()
    if "compiled" not in backends:
        print("compiled backend not importable; numpy timings only\n")

    rng = np.random.default_rng(0)
    header = f"{'op':<9} {'shape':<22} " + "".join(f"{name + ' ms':>13}" for name in backends)
    if len(backends) == 2:
        header += f"{'ratio':>9}"
    print(header)
    print("-" * len(header))

    for shape in SHAPES:
        label = "x".join(str(v) for v in shape[:3]) + f" k{shape[3]} o{shape[4]} p{shape[5]}"
        for op, call in _cases(rng, shape):
            times = {
                name: _best_of(lambda m=mod: call(m), args.repeats)
                for name, mod in backends.items()
            }
            row = f"{op:<9} {label:<22} " + "".join(
                f"{times[name] * 1e3:>13.3f}" for name in backends
            )
            if len(times) == 2:
                row += f"{times['compiled'] / times['numpy']:>9.2f}"
            print(row)


if __name__ == "__main__":
    main()
