"""Benchmark the compiled 3D conv kernels against the NumPy fallback.

Times corr3d / scatter3d / wgrad3d on the shapes the default encoder
actually produces (16^3 input, channel widths 8/16/32), plus one larger
grid. Run from the repo root:

    python benchmarks/bench_kernels.py [--repeat 20]
"""

import argparse
import time

import numpy as np

from streamcl.kernels import get_backend

# (label, c_in, c_out, padded input side, stride)
CASES = [
    ("enc stage 0 (16^3)", 1, 8, 18, 2),
    ("enc stage 1 (8^3)", 8, 16, 10, 2),
    ("enc stage 2 (4^3)", 16, 32, 6, 2),
    ("large grid (32^3)", 4, 8, 34, 2),
]


def _time(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_case(label, c_in, c_out, p, stride, repeat):
    rng = np.random.default_rng(0)
    x = rng.standard_normal((c_in, p, p, p))
    w = rng.standard_normal((c_out, c_in, 3, 3, 3))
    out_dim = (p - 3) // stride + 1
    u = rng.standard_normal((c_out, out_dim, out_dim, out_dim))

    np_be = get_backend("numpy")
    try:
        cy_be = get_backend("cython")
    except ImportError:
        cy_be = None

    rows = []
    ops = [
        ("corr3d", lambda be: be.corr3d(x, w, stride)),
        ("scatter3d", lambda be: be.scatter3d(u, w, stride, p)),
        ("wgrad3d", lambda be: be.wgrad3d(u, x, 3, stride)),
    ]
    for op_name, op in ops:
        t_np = _time(lambda: op(np_be), repeat)
        if cy_be is None:
            rows.append((label, op_name, t_np, None, None))
            continue
        # agreement spot check before trusting the timing
        assert np.allclose(op(np_be), op(cy_be), atol=1e-10)
        t_cy = _time(lambda: op(cy_be), repeat)
        rows.append((label, op_name, t_np, t_cy, t_np / t_cy))
    return rows


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=20, help="timing repeats (best-of)")
    args = ap.parse_args()

    print(f"{'case':<22} {'op':<10} {'numpy':>10} {'cython':>10} {'speedup':>8}")
    for case in CASES:
        for label, op_name, t_np, t_cy, ratio in bench_case(*case, repeat=args.repeat):
            np_ms = f"{1e3 * t_np:.3f} ms"
            if t_cy is None:
                print(f"{label:<22} {op_name:<10} {np_ms:>10} {'n/a':>10} {'n/a':>8}")
            else:
                cy_ms = f"{1e3 * t_cy:.3f} ms"
                print(f"{label:<22} {op_name:<10} {np_ms:>10} {cy_ms:>10} {ratio:>7.1f}x")


if __name__ == "__main__":
    main()
