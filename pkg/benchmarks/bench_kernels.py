"""Benchmark the jitted kernels against the pure-numpy fallback.

Run twice:

    python benchmarks/bench_kernels.py
    SHAIL_DISABLE_NUMBA=1 python benchmarks/bench_kernels.py
"""

import time

import numpy as np

from shail import kernels
from shail.geometry import build_path


def timeit(fn, repeats=5):
    fn()  # warm-up (triggers jit compilation on the numba path)
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_collision_scan(rng, n_frames=2000, n_other=30):
    ex = np.cumsum(rng.normal(0.5, 0.1, n_frames))
    ey = rng.normal(0.0, 0.2, n_frames)
    h = rng.normal(0.0, 0.05, n_frames)
    ec, es = np.cos(h), np.sin(h)
    el, ew = 4.5, 2.0
    ox = rng.uniform(0, 1000, (n_frames, n_other))
    oy = rng.uniform(-50, 50, (n_frames, n_other))
    oh = rng.uniform(-np.pi, np.pi, (n_frames, n_other))
    oc, osn = np.cos(oh), np.sin(oh)
    ol = np.full(n_other, 4.5)
    ow = np.full(n_other, 2.0)
    present = rng.random((n_frames, n_other)) < 0.8
    return timeit(lambda: kernels.collision_scan(
        ex, ey, ec, es, el, ew, ox, oy, oc, osn, ol, ow, present))


def bench_project_polyline(rng, n_points=5000, n_queries=2000):
    t = np.linspace(0, 4 * np.pi, n_points)
    path = build_path(np.column_stack([20 * np.cos(t) + t, 20 * np.sin(t)]))
    qx = rng.uniform(-30, 60, n_queries)
    qy = rng.uniform(-30, 30, n_queries)

    def run():
        for i in range(n_queries):
            kernels.project_polyline(path.waypoints[:, 0], path.waypoints[:, 1],
                                     path.cumulative_arclength, qx[i], qy[i])
    return timeit(run, repeats=3)


def main():
    rng = np.random.default_rng(0)
    mode = "numba" if kernels.NUMBA_ENABLED else "numpy"
    print(f"kernel backend: {mode}")
    t = bench_collision_scan(rng)
    print(f"collision_scan (2000 frames x 30 vehicles): {t * 1e3:8.2f} ms")
    t = bench_project_polyline(rng)
    print(f"project_polyline (2000 queries, 5000-pt path): {t * 1e3:8.2f} ms")


if __name__ == "__main__":
    main()
