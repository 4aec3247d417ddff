"""Benchmark the compiled gridding kernels against the numpy fallback.

Usage: python benchmarks/bench_gridding.py [--quick]

Times the two hot operations (k-space interpolation and its adjoint
spreading) on representative problem sizes and reports the speedup plus the
largest deviation between backend outputs.
"""

import argparse
import time

import numpy as np

from kreg import gridding
from kreg.gridding import _kernels_py, make_plan
from kreg.nufft import GriddingConfig

if gridding.HAVE_COMPILED:
    from kreg.gridding import _kernels as _compiled
else:
    _compiled = None


def time_call(fn, *args, repeats=3):
    best = float("inf")
    result = None
    for _ in range(repeats):
        start = time.perf_counter()
        result = fn(*args)
        best = min(best, time.perf_counter() - start)
    return best, result


def bench_case(grid_n, n_samples, cfg, repeats):
    rng = np.random.default_rng(0)
    gdims = cfg.padded_dims((grid_n,) * 3)
    locations = rng.uniform(-np.pi, np.pi, size=(n_samples, 3))
    plan = make_plan(locations, gdims, cfg.kernel_width, cfg.beta)
    grid = np.ascontiguousarray(
        rng.standard_normal(gdims) + 1j * rng.standard_normal(gdims)
    )
    values = rng.standard_normal(n_samples) + 1j * rng.standard_normal(n_samples)

    rows = []
    t_py_i, out_py = time_call(_kernels_py.interpolate, grid, plan, repeats=repeats)
    t_py_s, spread_py = time_call(_kernels_py.spread, values, plan, gdims, repeats=repeats)
    if _compiled is not None:
        t_cy_i, out_cy = time_call(_compiled.interpolate, grid, plan, repeats=repeats)
        t_cy_s, spread_cy = time_call(_compiled.spread, values, plan, gdims, repeats=repeats)
        dev_i = float(np.max(np.abs(out_cy - out_py)))
        dev_s = float(np.max(np.abs(spread_cy - spread_py)))
        rows.append(("interpolate", t_py_i, t_cy_i, dev_i))
        rows.append(("spread", t_py_s, t_cy_s, dev_s))
    else:
        rows.append(("interpolate", t_py_i, None, 0.0))
        rows.append(("spread", t_py_s, None, 0.0))
    return rows


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--quick", action="store_true", help="small sizes only")
    args = parser.parse_args()

    cfg = GriddingConfig()
    cases = [(32, 20_000), (64, 100_000)] if args.quick else [
        (32, 20_000), (64, 100_000), (96, 250_000),
    ]
    print(f"kernel width {cfg.kernel_width}, oversampling {cfg.oversampling_factor}, "
          f"compiled backend available: {gridding.HAVE_COMPILED}")
    header = f"{'grid':>6} {'samples':>9} {'op':>12} {'numpy [s]':>10} {'cython [s]':>11} {'speedup':>8} {'max dev':>10}"
    print(header)
    print("-" * len(header))
    for grid_n, n_samples in cases:
        repeats = 3 if grid_n < 96 else 2
        for name, t_py, t_cy, dev in bench_case(grid_n, n_samples, cfg, repeats):
            if t_cy is None:
                print(f"{grid_n:>6} {n_samples:>9} {name:>12} {t_py:>10.3f} {'-':>11} {'-':>8} {'-':>10}")
            else:
                print(f"{grid_n:>6} {n_samples:>9} {name:>12} {t_py:>10.3f} {t_cy:>11.3f} "
                      f"{t_py / t_cy:>8.1f} {dev:>10.2e}")


if __name__ == "__main__":
    main()
