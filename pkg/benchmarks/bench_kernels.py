"""Time the compiled and pure-Python modal-series kernels on heat-plant data.

Usage: python3 benchmarks/bench_kernels.py [--modes 31 124 500] [--points 2000] [--repeat 5]
"""

import argparse
import timeit

import numpy as np

from roreg import kernels
from roreg.heat_bench import build_heat_plant


def bench(n_modes, n_points, repeat):
    plant = build_heat_plant(n_modes)
    rng = np.random.default_rng(0)
    lams = rng.uniform(0.1, 50, n_points) + 1j * rng.uniform(-200, 200, n_points)
    args = (lams, plant.eigenvalues, plant.output_modes, plant.input_modes)
    rows = []
    for name, fn in [("modal_sum", lambda b: kernels.modal_sum(*args, backend=b)),
                     ("inverse_distance_sum", lambda b: kernels.inverse_distance_sum(lams, plant.eigenvalues, backend=b))]:
        times = {}
        for backend in ("python", "compiled"):
            fn(backend)
            times[backend] = min(timeit.repeat(lambda: fn(backend), number=1, repeat=repeat))
        dev = np.max(np.abs(fn("python") - fn("compiled")))
        rows.append((name, n_modes, n_points, times["python"], times["compiled"], dev))
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--modes", type=int, nargs="+", default=[31, 124, 500])
    ap.add_argument("--points", type=int, default=2000)
    ap.add_argument("--repeat", type=int, default=5)
    a = ap.parse_args()
    if kernels._compiled is None:
        raise SystemExit("compiled kernels are not built; run `pip install -e . --no-build-isolation` first")
    print(f"{'kernel':<22}{'modes':>6}{'points':>8}{'python s':>12}{'compiled s':>12}{'speedup':>9}{'max dev':>11}")
    for n in a.modes:
        for name, m, p, tp, tc, dev in bench(n, a.points, a.repeat):
            print(f"{name:<22}{m:>6}{p:>8}{tp:>12.4g}{tc:>12.4g}{tp / tc:>9.2f}{dev:>11.2e}")


if __name__ == "__main__":
    main()
