#!/usr/bin/env python3
"""Grid-refinement study for the two density solvers.

For each built-in model the forward finite-difference solver and the
kernel-quadrature propagator are run against the known transition
density at a ladder of resolutions; the table reports L1 errors and
the observed reduction factor per halving of (dt, dS).
"""

import argparse

import numpy as np

from stochastica import (
    PointMass,
    density_bm,
    density_gbm,
    density_vasicek,
    evolve_density,
    make_bm,
    make_gbm,
    make_vasicek,
    one_step_kernel,
    point_mass_on_grid,
    propagate,
)
from stochastica.density import trapezoid_weights

CASES = [
    ("bm", make_bm(0.1, 0.3), 0.0,
     lambda t, S0: density_bm(t, S0, 0.1, 0.3)),
    ("gbm", make_gbm(0.05, 0.2), 100.0,
     lambda t, S0: density_gbm(t, S0, 0.05, 0.2)),
    ("vasicek", make_vasicek(1.0, 0.05, 0.02), 0.03,
     lambda t, S0: density_vasicek(t, S0, 1.0, 0.05, 0.02)),
]


def l1(s, p, q):
    return float(np.sum(trapezoid_weights(s) * np.abs(p - q)))


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--horizon", type=float, default=1.0)
    ap.add_argument("--levels", type=int, default=3,
                    help="number of halvings starting from 201 nodes, 50 steps")
    args = ap.parse_args()
    t = args.horizon

    for name, model, S0, family in CASES:
        exact = family(t, S0)
        print(f"\n[{name}]  {'nodes':>6} {'steps':>6} {'L1 fd':>10} "
              f"{'L1 lattice':>11} {'fd gain':>8} {'lat gain':>9}")
        prev = (None, None)
        for level in range(args.levels + 1):
            n_nodes = 200 * 2 ** level + 1
            n_steps = 50 * 2 ** level
            out = evolve_density(model, PointMass(center=S0), t,
                                 n_steps=n_steps, n_nodes=n_nodes)
            err_fd = l1(out.s_values, out.p_values, exact(out.s_values))
            s = exact.default_grid(n_nodes, 8.0)
            kernel = one_step_kernel(model, 0.0, t / n_steps)
            lattice = propagate(kernel, point_mass_on_grid(s, S0), n_steps)
            err_lat = l1(s, lattice.p_values, exact(s))
            gain_fd = "" if prev[0] is None else f"{prev[0] / err_fd:8.2f}"
            gain_lat = "" if prev[1] is None else f"{prev[1] / err_lat:9.2f}"
            print(f"        {n_nodes:6d} {n_steps:6d} {err_fd:10.3e} "
                  f"{err_lat:11.3e} {gain_fd:>8} {gain_lat:>9}")
            prev = (err_fd, err_lat)


if __name__ == "__main__":
    main()
