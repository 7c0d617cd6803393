"""Compare the compiled and numpy im2col/col2im kernels on generator-sized inputs.

    python3 benchmarks/bench_kernels.py [--repeat 20]
"""

import argparse
import json
import timeit

import numpy as np

from seacolor import _pykernels

try:
    from seacolor import _ckernels
except ImportError:
    _ckernels = None

# (N, C, H, W, k, stride, pad): shapes seen by the toy U-Net at 32x32, batch 6
SHAPES = [
    (6, 3, 32, 32, 3, 1, 1),
    (6, 16, 32, 32, 3, 2, 1),
    (6, 48, 32, 32, 3, 1, 1),
    (6, 64, 8, 8, 3, 1, 1),
]


def bench(mod, x, k, stride, pad, repeat):
    cols = mod.im2col(x, k, k, stride, pad)
    t_fwd = min(timeit.repeat(lambda: mod.im2col(x, k, k, stride, pad), number=1, repeat=repeat))
    t_bwd = min(timeit.repeat(lambda: mod.col2im(cols, x.shape, k, k, stride, pad), number=1, repeat=repeat))
    return t_fwd, t_bwd


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    rows = []
    for n, c, h, w, k, s, p in SHAPES:
        x = rng.standard_normal((n, c, h, w))
        row = {"shape": [n, c, h, w], "k": k, "stride": s, "pad": p}
        row["python_im2col_ms"], row["python_col2im_ms"] = (1e3 * t for t in bench(_pykernels, x, k, s, p, args.repeat))
        if _ckernels is not None:
            row["cython_im2col_ms"], row["cython_col2im_ms"] = (1e3 * t for t in bench(_ckernels, x, k, s, p, args.repeat))
            row["speedup_im2col"] = row["python_im2col_ms"] / row["cython_im2col_ms"]
            row["speedup_col2im"] = row["python_col2im_ms"] / row["cython_col2im_ms"]
        rows.append(row)
    for r in rows:
        print(json.dumps({k: round(v, 4) if isinstance(v, float) else v for k, v in r.items()}))


if __name__ == "__main__":
    main()
