"""Time the compiled codeword-search kernels against the NumPy fallback.

    python benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import timeit

import numpy as np

from aodfeedback import _kernels
from aodfeedback._kernels import _pure
from aodfeedback.channel import complex_normal

try:
    from aodfeedback._kernels import _ext
except ImportError:
    _ext = None


def _unit(rng, shape):
    x = complex_normal(rng, shape)
    return np.ascontiguousarray(x / np.linalg.norm(x, axis=-1, keepdims=True))


def cases():
    rng = np.random.default_rng(0)
    yield "best_codeword 64x4", (_unit(rng, (64, 4)), _unit(rng, 4))
    full = _unit(rng, (256, 128))
    h = _unit(rng, 128)
    yield "best_codeword 256x128", (full, h)
    inner = _unit(rng, (4096, 4))
    a = complex_normal(rng, (128, 4))
    b = np.ascontiguousarray(a.conj().T @ h)
    g = np.ascontiguousarray(a.conj().T @ a)
    yield "best_subspace_codeword 4096x4", (inner, b, g)
    yield "assign_chordal 10000 x 256 (D=4)", (_unit(rng, (10_000, 4)), _unit(rng, (256, 4)))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if _ext is None:
        print("compiled extension not built; only the fallback is timed")
    print(f"backend in use: {_kernels.BACKEND} (large full searches always take the BLAS path)")
    print(f"{'kernel':36s} {'numpy [ms]':>11s} {'cython [ms]':>12s} {'speedup':>8s} {'dispatch [ms]':>14s}")
    for name, argv in cases():
        fn = name.split()[0]
        t_py = min(timeit.repeat(lambda: getattr(_pure, fn)(*argv), number=3, repeat=args.repeat)) / 3
        if _ext is None:
            print(f"{name:36s} {1e3 * t_py:11.3f} {'-':>12s} {'-':>8s}")
            continue
        t_c = min(timeit.repeat(lambda: getattr(_ext, fn)(*argv), number=3, repeat=args.repeat)) / 3
        t_d = min(timeit.repeat(lambda: getattr(_kernels, fn)(*argv), number=3, repeat=args.repeat)) / 3
        print(f"{name:36s} {1e3 * t_py:11.3f} {1e3 * t_c:12.3f} {t_py / t_c:8.2f}x {1e3 * t_d:14.3f}")


if __name__ == "__main__":
    main()
