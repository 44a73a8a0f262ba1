"""Calibrate C in the geodesic entropy-convexity allowance C * cell width.

Entropy is sampled at s = 0, 1/4, 1/2, 3/4, 1 along the deposited displacement geodesic
of random pairs; the worst negative second difference is reported in cell widths.

    python scripts/calibrate_geodesic_tolerance.py [--pairs 30] [--seed 0]
"""

import argparse

import numpy as np

from eulermix.grid import box_grid, entropy, interval_grid, random_measure
from eulermix.transport import (GEODESIC_ENTROPY_TOL_CONSTANT, displacement_interpolate,
                                optimal_plan)

TIMES = (0.0, 0.25, 0.5, 0.75, 1.0)


def worst_ratio(grid, rng, pairs):
    worst = 0.0
    for _ in range(pairs):
        for smoothness in (0.0, 2.0):
            mu = random_measure(grid, rng, smoothness=smoothness)
            nu = random_measure(grid, rng, smoothness=smoothness)
            plan = optimal_plan(mu, nu)
            h = np.array([entropy(displacement_interpolate(plan, s)) for s in TIMES])
            second = h[:-2] + h[2:] - 2 * h[1:-1]
            worst = max(worst, -second.min() / grid.cell_width)
    return worst


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--pairs", type=int, default=30)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    rng = np.random.default_rng(args.seed)
    overall = 0.0
    for grid in (interval_grid(16), interval_grid(32), interval_grid(64), box_grid(4, 4),
                 box_grid(8, 8)):
        ratio = worst_ratio(grid, rng, args.pairs)
        overall = max(overall, ratio)
        print(f"{str(grid.shape):<10} {ratio:8.3f}")
    print(f"worst ratio {overall:.3f}; frozen {GEODESIC_ENTROPY_TOL_CONSTANT}")


if __name__ == "__main__":
    main()
