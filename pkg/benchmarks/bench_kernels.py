"""Time the numba kernels against their numpy fallbacks.

    python benchmarks/bench_kernels.py [--paths 4096] [--transitions 2000] [--repeat 5]

Both backends consume identical inputs, so the script also checks that their
outputs agree bitwise.
"""
import argparse
import time

import numpy as np

from slicevol import moment_match as mm
from slicevol.sde_core import SdeParams, euler_block, make_layout, pieces_for
from slicevol.slice_data import interpolate
from slicevol.synth import profile


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def bench_euler(n_paths, repeat):
    p = profile(12, 1000.0)
    pieces = [(1.5, 2.0, p[2], p[2], False)] + pieces_for(interpolate(p), 2.0, 10.0)
    layout = make_layout(pieces, 0.01)
    z = np.random.default_rng(0).standard_normal((layout.total_steps, n_paths))
    params = SdeParams(1.0, 25.0)
    euler_block(p[2], layout, params, z[:, :2], use_numba=True)  # compile
    res = {}
    for name, flag in (("numba", True), ("numpy", False)):
        res[name] = best_of(lambda: euler_block(p[2], layout, params, z, use_numba=flag), repeat)
    same = np.array_equal(res["numba"][1][2], res["numpy"][1][2])
    steps = n_paths * layout.total_steps
    return {k: (t, steps / t) for k, (t, _) in res.items()}, same


def bench_rk4(n, repeat):
    rng = np.random.default_rng(1)
    v0 = rng.normal(0, 50, n)
    pa = rng.uniform(100, 1500, n)
    pb = rng.uniform(100, 1500, n)
    length = np.ones(n)
    mm.propagate_batch(v0[:2], pa[:2], pb[:2], length[:2], 1.0, 25.0, use_numba=True)
    res = {}
    for name, flag in (("numba", True), ("numpy", False)):
        res[name] = best_of(lambda: mm.propagate_batch(v0, pa, pb, length, 1.0, 25.0, use_numba=flag), repeat)
    same = all(np.array_equal(a, b) for a, b in zip(res["numba"][1], res["numpy"][1]))
    return {k: (t, n / t) for k, (t, _) in res.items()}, same


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--paths", type=int, default=4096)
    ap.add_argument("--transitions", type=int, default=2000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    euler, same_e = bench_euler(args.paths, args.repeat)
    rk4, same_r = bench_rk4(args.transitions, args.repeat)
    print(f"{'kernel':<8} {'backend':<7} {'seconds':>9} {'throughput':>14}")
    for name, unit, res in (("euler", "steps/s", euler), ("rk4", "trans/s", rk4)):
        for backend, (t, rate) in res.items():
            print(f"{name:<8} {backend:<7} {t:9.4f} {rate:11.3g} {unit}")
        print(f"{name:<8} speedup {res['numpy'][0] / res['numba'][0]:8.1f}x")
    print(f"bitwise equal: euler={same_e} rk4={same_r}")


if __name__ == "__main__":
    main()
