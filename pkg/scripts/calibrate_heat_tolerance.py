"""Calibrate the constant C in tol(h, grid) = C * (h + cell width) for the heat-flow checks.

For random pairs on several grids and time steps, records the worst EVI gap and W2
contraction excess in units of (h + cell width). The frozen constant in
eulermix.heat is the worst observed ratio rounded up with a factor-2 margin.

    python scripts/calibrate_heat_tolerance.py [--pairs 50] [--seed 0]
"""

import argparse
import math

import numpy as np

from eulermix.grid import box_grid, interval_grid, random_measure
from eulermix.heat import EVI_TOL_CONSTANT, HeatOperator, check_contraction, check_evi


def worst_ratios(grid, rng, pairs, hs, smoothness):
    op = HeatOperator(grid)
    unit_tol = lambda h: h + grid.cell_width  # noqa: E731
    worst_evi = worst_contraction = 0.0
    for _ in range(pairs):
        mu = random_measure(grid, rng, smoothness=smoothness)
        nu = random_measure(grid, rng, smoothness=smoothness)
        for h in hs:
            evi = check_evi(op, mu, nu, h, constant=0.0)
            worst_evi = max(worst_evi, -evi.gap / unit_tol(h))
            con = check_contraction(op, mu, nu, h, constant=0.0)
            worst_contraction = max(worst_contraction,
                                    (con.after - con.before) / unit_tol(min(h, op.substep)))
    return worst_evi, worst_contraction


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--pairs", type=int, default=50)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    rng = np.random.default_rng(args.seed)
    grids = {"interval-16": interval_grid(16), "interval-32": interval_grid(32),
             "interval-64": interval_grid(64), "box-8x8": box_grid(8, 8)}
    hs = (1e-4, 1e-3, 1e-2)
    overall = 0.0
    print(f"{'grid':<12} {'smooth':>6} {'evi':>8} {'contr':>8}")
    for name, grid in grids.items():
        for smoothness in (0.0, 2.0):
            evi, con = worst_ratios(grid, rng, args.pairs, hs, smoothness)
            overall = max(overall, evi, con)
            print(f"{name:<12} {smoothness:>6.1f} {evi:>8.3f} {con:>8.3f}")
    suggested = math.ceil(2 * overall)
    print(f"worst ratio {overall:.3f}; suggested constant {suggested}; frozen {EVI_TOL_CONSTANT}")


if __name__ == "__main__":
    main()
