"""Action of geodesically extended curves versus the discrete action.

In 1-D the fine action is measured on undeposited atoms and matches to round-off.
In 2-D the fine states are deposited on the grid; the gap is tabulated against the
cell width for a fixed pair of Gaussian bumps.

    python scripts/action_identity_refinement.py [--sizes 4 8 16] [--refinement 2]
"""

import argparse

import numpy as np

from eulermix.curve_ops import discrete_curve_action, extend, fine_action
from eulermix.grid import GridMeasure, box_grid, interval_grid, random_measure
from eulermix.traffic_plan import DiscreteCurve
from eulermix.transport import squared_distance


def bump(grid, cx, cy, width=0.12):
    d2 = (grid.centers[:, 0] - cx) ** 2 + (grid.centers[:, 1] - cy) ** 2
    return GridMeasure.from_density(grid, np.exp(-0.5 * d2 / width**2))


def gap_2d(n: int, refinement: int) -> tuple[float, float]:
    grid = box_grid(n, n)
    curve = DiscreteCurve.from_states([bump(grid, 0.3, 0.3), bump(grid, 0.7, 0.6)])
    cap = grid.size
    discrete = squared_distance(curve.state(0), curve.state(1), cap) / (2 * curve.tau)
    fine = fine_action(extend(curve, refinement, cap=cap), cap=cap)
    return discrete, fine - discrete


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sizes", type=int, nargs="+", default=[4, 8, 16])
    parser.add_argument("--refinement", type=int, default=2)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    grid = interval_grid(32)
    curve = DiscreteCurve.from_states([random_measure(grid, rng, smoothness=2) for _ in range(5)])
    for M in (1, 2, 3, 8):
        gap = fine_action(extend(curve, M)) - discrete_curve_action(curve)
        print(f"1-D refinement {M}: gap {gap:.3e}")

    previous = None
    for n in args.sizes:
        discrete, gap = gap_2d(n, args.refinement)
        ratio = "" if previous is None else f"  ratio {previous / gap:.2f}"
        print(f"2-D {n}x{n}: discrete action {discrete:.6f}  gap {gap:.6f}{ratio}")
        previous = gap


if __name__ == "__main__":
    main()
