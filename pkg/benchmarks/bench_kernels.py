"""Benchmark of the compiled kernels against the pure-numpy fallback.

Times each hot kernel on the shapes the long-run simulator hits (a
91-wavelength rotation field), then an end-to-end one-day distribution
run per backend in subprocesses (the backend is fixed at import time).

Usage: python benchmarks/bench_kernels.py [--skip-end-to-end]
"""

import argparse
import subprocess
import sys
import time

import numpy as np

from pollink import _kernels_py as kpy

try:
    from pollink import _kernels_cy as kcy
except ImportError:
    kcy = None

N_GRID = 91
REPEATS = 20_000


def bench(fn, *args, repeats=REPEATS):
    fn(*args)  # warm up
    start = time.perf_counter()
    for _ in range(repeats):
        fn(*args)
    return (time.perf_counter() - start) / repeats * 1e6  # us per call


def kernel_rows():
    rng = np.random.default_rng(0)
    axes = rng.normal(size=(N_GRID, 3))
    axes /= np.linalg.norm(axes, axis=1, keepdims=True)
    angles = rng.uniform(0.0, 0.01, N_GRID)
    field = kpy.rotations_from_axis_angle(axes, rng.uniform(0, np.pi, N_GRID))
    single = field[0].copy()
    vec = np.array([1.0, 0.0, 0.0])
    phis = rng.uniform(0, 2 * np.pi, 4)
    ids = np.array([0, 1, 0, 1])

    cases = [
        ("rotations_from_axis_angle", (axes, angles)),
        ("drift_step_inplace", (field.copy(), axes, angles)),
        ("compose_single_left_inplace", (field.copy(), single)),
        ("apply_matrices_vec", (field, vec)),
        ("rotation_angles", (field,)),
        ("retarder_chain", (phis, ids)),
    ]
    rows = []
    for name, args in cases:
        t_py = bench(getattr(kpy, name), *args)
        t_cy = bench(getattr(kcy, name), *args) if kcy is not None else float("nan")
        rows.append((name, t_py, t_cy))
    return rows


END_TO_END = (
    "import time, numpy as np\n"
    "from pollink import apc, channel, source\n"
    "rng = np.random.default_rng(1)\n"
    "ch = channel.synth_dispersive_channel(6, rng)\n"
    "start = time.perf_counter()\n"
    "apc.run_long_term(ch, apc.APCConfig(), source.SourceModel(), 2e5,\n"
    "                  source.MeasurementPlan(dwell_s=25.0), 86400.0, 240.0, rng)\n"
    "print(f'{time.perf_counter() - start:.3f}')\n"
)


def end_to_end(pure_python):
    env = {"POLLINK_PURE_PYTHON": "1"} if pure_python else {}
    import os

    out = subprocess.run(
        [sys.executable, "-c", END_TO_END],
        env={**os.environ, **env},
        capture_output=True,
        text=True,
        check=True,
    )
    return float(out.stdout.strip())


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--skip-end-to-end", action="store_true")
    args = parser.parse_args()

    if kcy is None:
        print("compiled kernels not built; timing the fallback only\n")

    print(f"{'kernel':34s} {'python (us)':>12s} {'compiled (us)':>14s} {'speedup':>8s}")
    for name, t_py, t_cy in kernel_rows():
        speed = t_py / t_cy if t_cy == t_cy else float("nan")
        print(f"{name:34s} {t_py:12.2f} {t_cy:14.2f} {speed:7.1f}x")

    if not args.skip_end_to_end:
        print("\none simulated day of compensated distribution:")
        t_py = end_to_end(pure_python=True)
        print(f"{'python backend':34s} {t_py:10.2f} s")
        if kcy is not None:
            t_cy = end_to_end(pure_python=False)
            print(f"{'compiled backend':34s} {t_cy:10.2f} s   ({t_py / t_cy:.2f}x)")


if __name__ == "__main__":
    main()
