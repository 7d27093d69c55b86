"""Benchmark the numba kernels against the pure-numpy fallbacks.

Imports both backend modules directly (bypassing the GAZESEG_BACKEND
selection in gazeseg.kernels), checks that the two implementations agree
on every kernel, then times them on shapes representative of the desk
preset. Numba functions are called once before timing so compilation is
not measured.

Usage:
    python3 benchmarks/bench_backends.py [--repeats 5]
"""

import argparse
import time

import numpy as np

import gazeseg._kernels_numpy as knp

try:
    import gazeseg._kernels_numba as knb

    HAS_NUMBA = True
except ImportError:
    knb = None
    HAS_NUMBA = False


def _time(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def _cases(rng):
    """(name, args-builder, runner, comparator) per kernel."""
    cases = []

    # splat_add: 64x64 heatmap, 48 fixations (desk simulator default)
    xs = rng.uniform(0, 63, size=48)
    ys = rng.uniform(0, 63, size=48)
    ws = rng.uniform(50, 400, size=48)
    sigma = 64 / 24.0

    def run_splat(mod):
        heat = np.zeros((64, 64), dtype=np.float64)
        mod.splat_add(heat, xs, ys, ws, 1.0 / (2 * sigma * sigma), 4.0 * sigma)
        return heat

    cases.append(("splat_add 64x64, 48 fix", run_splat))

    # crf_build_kernel: 48x48 image -> (2304, 2304) matrix; takes the
    # intensity image flattened row-major, like crf.mean_field_refine does
    inten = rng.uniform(0, 255, size=48 * 48)

    def run_crf(mod):
        return mod.crf_build_kernel(
            inten, 48, 48, 1 / (2 * 30.0**2), 1 / (2 * 13.0**2),
            1 / (2 * 3.0**2), 4.0, 3.0,
        )

    cases.append(("crf_build_kernel 48x48", run_crf))

    # lpp forward/backward: 32x32x16 feature map, 3x3 window
    phi = rng.normal(size=(32, 32, 16))
    offsets = np.array(
        [(dy, dx) for dy in (-1, 0, 1) for dx in (-1, 0, 1)], dtype=np.int64
    )
    gout = rng.normal(size=phi.shape)

    def run_lpp_fwd(mod):
        return mod.lpp_forward(phi, offsets)

    def run_lpp_bwd(mod):
        out, alpha, sim = mod.lpp_forward(phi, offsets)
        return mod.lpp_backward(phi, gout, alpha, sim, offsets)

    cases.append(("lpp_forward 32x32x16", run_lpp_fwd))
    cases.append(("lpp_backward 32x32x16", run_lpp_bwd))

    # conv3x3: batch 8, 32x32, 16->16 channels (desk UNet inner block)
    xp = rng.normal(size=(8, 34, 34, 16)).astype(np.float32)
    w = (rng.normal(size=(3, 3, 16, 16)) * 0.1).astype(np.float32)
    b = rng.normal(size=16).astype(np.float32)
    dy = rng.normal(size=(8, 32, 32, 16)).astype(np.float32)

    def run_conv_fwd(mod):
        return mod.conv3x3_forward(xp, w, b)

    def run_conv_bwd_data(mod):
        return mod.conv3x3_backward_data(dy, w)

    def run_conv_bwd_w(mod):
        return mod.conv3x3_backward_weights(xp, dy)

    cases.append(("conv3x3_forward 8x32x32x16", run_conv_fwd))
    cases.append(("conv3x3_backward_data", run_conv_bwd_data))
    cases.append(("conv3x3_backward_weights", run_conv_bwd_w))
    return cases


def _max_diff(a, b):
    if isinstance(a, tuple):
        return max(_max_diff(x, y) for x, y in zip(a, b))
    return float(np.max(np.abs(np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64))))


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    cases = _cases(rng)

    if not HAS_NUMBA:
        print("numba not importable; timing the numpy backend only")

    header = f"{'kernel':34s} {'numpy (ms)':>12s} {'numba (ms)':>12s} {'speedup':>9s} {'max |diff|':>11s}"
    print(header)
    print("-" * len(header))
    for name, runner in cases:
        t_np = _time(lambda: runner(knp), args.repeats)
        if HAS_NUMBA:
            runner(knb)  # compile outside the timed region
            t_nb = _time(lambda: runner(knb), args.repeats)
            diff = _max_diff(runner(knp), runner(knb))
            print(
                f"{name:34s} {t_np * 1e3:12.3f} {t_nb * 1e3:12.3f} "
                f"{t_np / t_nb:8.2f}x {diff:11.3e}"
            )
        else:
            print(f"{name:34s} {t_np * 1e3:12.3f} {'-':>12s} {'-':>9s} {'-':>11s}")


if __name__ == "__main__":
    main()
