"""Compare the compiled and numpy backends on the solver sweep and the flow integrator.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--csv out.csv]

Each case is run on every available backend; the table reports the best of
``--repeat`` wall-clock timings, the speed-up over numpy and the largest
difference between the backends' outputs.
"""

import argparse
import csv
import sys
import time

import numpy as np

from wkam import kernels
from wkam.flows import integrate_batch
from wkam.grid import PeriodicGrid, ScalarField
from wkam.hj_solver import SolverConfig, bellman_apply, solve_discounted
from wkam.model import preset


def _sweep_case(name, N):
    m = preset(name)
    grid = PeriodicGrid.uniform(N, m.n)
    cfg = SolverConfig(dt=0.01, xi_max=3.0, scheme="taylor2")
    c = m.offset if m.kind == "quadraticKam" else 0.3
    rng = np.random.default_rng(0)
    w = ScalarField(grid, 0.01 * rng.standard_normal(grid.size))
    return lambda b: bellman_apply(w, m, c, 0.05, 0.0, cfg, check_box=False, backend=b).values


def _solve_case():
    m = preset("F1")
    grid = PeriodicGrid.uniform(2048)
    cfg = SolverConfig(dt=0.005, scheme="taylor2", tol=1e-10)
    return lambda b: solve_discounted(m, 0.0, 0.02, 0.0, grid, cfg, backend=b)[0].values


def _flow_case():
    m = preset("F2")
    X0 = np.linspace(0, 1, 100, endpoint=False)[:, None]
    P0 = np.full_like(X0, 0.4)
    return lambda b: integrate_batch(m, 0.4, 0.05, X0, P0, -1e-3, 5000, 50, b)[1]


CASES = {
    "sweep 1-D N=4096": lambda: _sweep_case("F2", 4096),
    "sweep 2-D N=128^2": lambda: _sweep_case("kam2d", 128),
    "solve F1 N=2048": _solve_case,
    "rk4 100 orbits x 5000 steps": _flow_case,
}


def run(repeat):
    backends = sorted(kernels.BACKENDS)
    rows = []
    for label, make in CASES.items():
        fn = make()
        times, outs = {}, {}
        for b in backends:
            best = np.inf
            for _ in range(repeat):
                t0 = time.perf_counter()
                outs[b] = fn(b)
                best = min(best, time.perf_counter() - t0)
            times[b] = best
        diff = max(float(np.max(np.abs(outs[b] - outs["python"]))) for b in backends)
        for b in backends:
            rows.append((label, b, times[b], times["python"] / times[b], diff))
    return rows


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--csv", default=None, help="also write the table here")
    args = ap.parse_args(argv)
    if "cython" not in kernels.BACKENDS:
        print("compiled backend not built; timing numpy only", file=sys.stderr)
    rows = run(args.repeat)
    print(f"{'case':30s} {'backend':8s} {'seconds':>10s} {'speed-up':>9s} {'max diff':>10s}")
    for label, b, t, s, d in rows:
        print(f"{label:30s} {b:8s} {t:10.4f} {s:9.1f} {d:10.2e}")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["case", "backend", "seconds", "speedup", "max_diff"])
            w.writerows(rows)


if __name__ == "__main__":
    main()
