"""Warm-started continuation on the mirrored-halves instance: q up, then lambda down.

Prints the incompressibility residual along q and the entropy profiles along lambda.

    python scripts/continuation_ladder.py [--cells 32] [--steps 2]
"""

import argparse

import numpy as np

from eulermix.instances import mirrored_halves
from eulermix.solver import SolverConfig, continuation_study
from eulermix.traffic_plan import ObjectiveParams


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--cells", type=int, default=32)
    parser.add_argument("--steps", type=int, default=2)
    args = parser.parse_args()
    N = args.steps
    inst = mirrored_halves(args.cells, N)

    q_stages = continuation_study(
        inst, SolverConfig(schedule=[ObjectiveParams(N=N, q=q) for q in (2.0, 4.0, 8.0)]))
    print("q      objective      incompressibility")
    for s in q_stages:
        print(f"{s.params.q:<6g} {s.objective:.10f}  {s.incompressibility_residual:.3e}")

    lam_stages = continuation_study(
        inst, SolverConfig(schedule=[ObjectiveParams(N=N, lam=lam) for lam in (1.0, 0.1, 0.01)]))
    print("lambda objective      action         profile")
    for s in lam_stages:
        profile = " ".join(f"{h:.5f}" for h in s.entropy_profile)
        print(f"{s.params.lam:<6g} {s.objective:.10f}  {s.parts['action']:.10f}  {profile}")
    last = [np.asarray(s.entropy_profile) for s in lam_stages[-2:]]
    print(f"max profile change between the last two stages: {np.abs(last[1] - last[0]).max():.3e}")


if __name__ == "__main__":
    main()
