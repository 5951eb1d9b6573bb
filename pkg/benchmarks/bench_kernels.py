"""Compare the compiled and pure-Python geodesic kernels.

Run with ``python benchmarks/bench_kernels.py [--repeat N]``. Both backends
integrate the same Vandermonde geodesic; the script reports wall time per
run, the speedup and the largest difference between the end states.
"""
import argparse
import time

import numpy as np

from stackel_lab import shipped
from stackel_lab.kernels import available_backends


def bench(impl, coef, dcoef, y0, t_end, tol, repeat):
    best = np.inf
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = impl.run_staeckel(coef, dcoef, y0, 0.0, t_end, tol, tol, 10**6, np.zeros((0, 3)), -1.0)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--t-end", type=float, default=10.0)
    ap.add_argument("--tol", type=float, default=1e-12)
    args = ap.parse_args(argv)

    data, box = shipped.metric("vandermonde_wide")
    coef, dcoef = data.kernel_table()
    y0 = np.array([*box.center, 0.6, -0.5, 0.4])
    backends = available_backends()
    results = {}
    for name, impl in backends.items():
        results[name] = bench(impl, coef, dcoef, y0, args.t_end, args.tol, args.repeat)
        secs, out = results[name]
        print(f"{name:>7}: {secs * 1e3:9.3f} ms  steps={out[4]} rejected={out[5]} nfev={out[6]}")
    if "cython" in results:
        py, cy = results["python"], results["cython"]
        diff = float(np.max(np.abs(py[1][1][-1] - cy[1][1][-1])))
        print(f"speedup: {py[0] / cy[0]:.1f}x   max end-state difference: {diff:.3g}")
    else:
        print("compiled extension not built; only the Python backend was timed")


if __name__ == "__main__":
    main()
