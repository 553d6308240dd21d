"""Compare the compiled kernels against the pure-python fallback.

Run from the repo root after an editable install:

    python3 benchmarks/bench_kernels.py [--size 512] [--repeats 5]

Both backends are also checked for bit-identical output on each workload,
so a speedup never comes at the cost of a semantics drift.
"""

import argparse
import time

import numpy as np

from atelier.kernels import available_backends
from atelier.raster import gaussian_kernel_q


def workloads(size, rng):
    gray = rng.integers(0, 256, (size, size), dtype=np.uint8)
    rgba = rng.integers(0, 256, (size, size, 4), dtype=np.uint8)
    rgba2 = rng.integers(0, 256, (size, size, 4), dtype=np.uint8)
    alpha = rng.integers(0, 256, (size, size), dtype=np.uint8)
    gray16 = rng.integers(0, 65536, (size, size), dtype=np.uint16)
    depth = rng.uniform(0.5, 80.0, (size, size))
    q = gaussian_kernel_q(1.4)

    def edges(mod):
        gx, gy = mod.sobel_i32(mod.blur_u8(gray, q))
        return mod.canny_nms_hyst(gx, gy, 100.0, 200.0)

    return [
        ("luma_u8", lambda m: m.luma_u8(rgba)),
        ("blur_u8 sigma=1.4", lambda m: m.blur_u8(gray, q)),
        ("sobel_i32", lambda m: m.sobel_i32(gray)),
        ("canny full", edges),
        ("resize u8 2x", lambda m: m.resize_bilinear_u8(rgba, size * 2, size * 2)),
        ("resize u16 2x", lambda m: m.resize_bilinear_u16(gray16, size * 2, size * 2)),
        ("composite_u8", lambda m: m.composite_u8(rgba, rgba2, alpha)),
        ("depth_to_gray", lambda m: m.depth_to_gray(depth, 1.0, 60.0)),
    ]


def best_of(fn, mod, repeats):
    best = float("inf")
    out = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn(mod)
        best = min(best, time.perf_counter() - t0)
    return best, out


def same(a, b):
    if isinstance(a, tuple):
        return all(np.array_equal(x, y) for x, y in zip(a, b))
    return np.array_equal(a, b)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=512)
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()

    backends = available_backends()
    if "native" not in backends:
        print("compiled extension not available; timing fallback only")
    rng = np.random.default_rng(1)

    names = sorted(backends)
    header = f"{'kernel':<18}" + "".join(f"{n:>12}" for n in names)
    if len(names) == 2:
        header += f"{'speedup':>10}{'match':>7}"
    print(f"image size {args.size}x{args.size}, best of {args.repeats}")
    print(header)
    print("-" * len(header))

    for label, fn in workloads(args.size, rng):
        times, outs = {}, {}
        for name in names:
            times[name], outs[name] = best_of(fn, backends[name], args.repeats)
        row = f"{label:<18}" + "".join(f"{times[n] * 1e3:>10.2f}ms" for n in names)
        if len(names) == 2:
            ratio = times["python"] / times["native"]
            match = "yes" if same(outs["native"], outs["python"]) else "NO"
            row += f"{ratio:>9.1f}x{match:>7}"
        print(row)


if __name__ == "__main__":
    main()
