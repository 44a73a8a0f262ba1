"""Operators between discrete curves and densely sampled curves: geodesic extension,
offset sampling, heat regularization with endpoint ramps, and the conversion between
traffic plans and weighted families of curves."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .grid import Grid, GridMeasure, entropy, entropy_masses
from .heat import HeatOperator
from .traffic_plan import BoundaryCoupling, DiscreteCurve, LegCost, TrafficPlan
from .transport import (LP_CAP, displacement_interpolate, optimal_plan, pushforward_points,
                        squared_distance, w2_1d_points)

# delta(h) for the action of extended 2-D curves: C * cell width. Bilinear deposit makes the
# measured gap shrink like h^2 on smooth data (scripts/action_identity_refinement.py), so
# this first-order allowance is loose on fine grids; 1-D curves are held to round-off.
ACTION_TOL_CONSTANT = 0.5
ACTION_TOL_1D = 1e-9


def action_tolerance(grid: Grid, constant: float = ACTION_TOL_CONSTANT) -> float:
    return ACTION_TOL_1D if grid.dim == 1 else constant * grid.cell_width


@dataclass(frozen=True, eq=False)
class FineCurve:
    """States at the uniform times i / K, i = 0..K.

    ``points`` optionally keeps, for each time, the undeposited atoms (positions,
    masses) of a geodesic interpolant; the action of a 1-D curve is then computed on
    these atoms, which makes it exact rather than grid-approximate.
    """

    grid: Grid
    masses: np.ndarray
    points: tuple | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        masses = np.array(self.masses, dtype=float)
        if masses.ndim != 2 or masses.shape[0] < 2 or masses.shape[1] != self.grid.size:
            raise ValueError(f"expected (K+1, {self.grid.size}) masses, got {masses.shape}")
        masses.setflags(write=False)
        object.__setattr__(self, "masses", masses)
        if self.points is not None and len(self.points) != len(masses):
            raise ValueError("points must be given for every time")

    @property
    def resolution(self) -> int:
        return self.masses.shape[0] - 1

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.resolution + 1) / self.resolution

    @property
    def states(self) -> list[GridMeasure]:
        return [GridMeasure(self.grid, m) for m in self.masses]

    def entropies(self) -> np.ndarray:
        return entropy_masses(self.masses, self.grid.volumes)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t"] + [f"m{i}" for i in range(self.grid.size)])
            for t, row in zip(self.times, self.masses):
                writer.writerow([repr(float(t))] + [repr(float(x)) for x in row])

    @classmethod
    def from_discrete(cls, curve: DiscreteCurve) -> "FineCurve":
        return cls(curve.grid, curve.masses)


def _grid_atoms(mu_masses: np.ndarray, grid: Grid):
    keep = mu_masses > 0
    return grid.centers[keep], mu_masses[keep]


def extend(curve: DiscreteCurve, refinement: int, cap: int = LP_CAP) -> FineCurve:
    """Fill every leg with the displacement geodesic of its optimal plan at fractions j / M."""
    M = int(refinement)
    if M < 1:
        raise ValueError("refinement must be at least 1")
    grid = curve.grid
    if grid.dim > 1 and np.any(curve.masses[1:-1] <= 0):
        raise ValueError("geodesic extension in 2-D needs strictly positive interior states")
    masses = [curve.masses[0]]
    points = [_grid_atoms(curve.masses[0], grid)]
    for k in range(curve.N):
        a, b = curve.state(k), curve.state(k + 1)
        plan = optimal_plan(a, b, cap) if M > 1 else None
        for j in range(1, M + 1):
            if j == M:
                masses.append(b.masses)
                points.append(_grid_atoms(b.masses, grid))
            else:
                masses.append(displacement_interpolate(plan, j / M).masses)
                points.append(pushforward_points(plan, j / M))
    return FineCurve(grid, np.array(masses), tuple(points), {"refinement": M, "N": curve.N})


def fine_action(curve: FineCurve, use_points: bool = True, cap: int = LP_CAP) -> float:
    """Sum over consecutive states of W2^2 / (2 dt).

    1-D curves carrying undeposited atoms are measured on those atoms; everything else
    is measured on the grid states.
    """
    dt = 1.0 / curve.resolution
    total = 0.0
    if use_points and curve.points is not None and curve.grid.dim == 1:
        for (x, a), (y, b) in zip(curve.points, curve.points[1:]):
            total += w2_1d_points(x[:, 0], a, y[:, 0], b)
    else:
        states = curve.states
        for mu, nu in zip(states, states[1:]):
            total += squared_distance(mu, nu, cap)
    return total / (2 * dt)


def discrete_curve_action(curve: DiscreteCurve, cost: LegCost | None = None) -> float:
    cost = cost or LegCost(curve.grid, True, 1e-3)
    return sum(cost(a, b) for a, b in zip(curve.masses, curve.masses[1:])) / (2 * curve.tau)


def _fine_index(curve: FineCurve, t: float, snap: bool) -> int:
    x = t * curve.resolution
    i = round(x)
    if abs(x - i) > 1e-9 and not snap:
        raise ValueError(f"time {t} is not on the fine grid of resolution {curve.resolution}")
    return int(i)


def sample(curve: FineCurve, N: int, offset_policy: str = "zero", snap: bool = False) -> DiscreteCurve:
    """Restrict to the times k tau + s (interior k) with unchanged endpoints.

    ``offset_policy`` is ``"zero"`` (s = 0) or ``"entropy"``: s ranges over the fine
    times in [0, tau) and the one with the smallest sampled entropy sum wins (earliest
    on ties).
    """
    K = curve.resolution
    if N < 1:
        raise ValueError("N must be positive")
    if K % N and not snap:
        raise ValueError(f"N = {N} does not divide the fine resolution {K}")
    if offset_policy == "zero":
        offsets = [0.0]
    elif offset_policy == "entropy":
        offsets = [j / K for j in range(max(1, math.ceil(K / N - 1e-9)))]
    else:
        raise ValueError(f"unknown offset policy {offset_policy!r}")
    ent = curve.entropies()
    best = None
    for s in offsets:
        idx = [_fine_index(curve, k / N + s, snap) for k in range(1, N)]
        score = float(np.sum(ent[idx])) / N
        if best is None or score < best[0]:
            best = (score, idx)
    idx = [0] + best[1] + [K]
    return DiscreteCurve(curve.grid, curve.masses[idx])


def _state_at(curve: FineCurve, u: float) -> np.ndarray:
    """Masses at time u, affine in the masses between neighbouring fine times."""
    x = u * curve.resolution
    i = min(int(math.floor(x + 1e-12)), curve.resolution - 1)
    frac = x - i
    if abs(frac) < 1e-12:
        return curve.masses[i].copy()
    if abs(frac - 1) < 1e-12:
        return curve.masses[i + 1].copy()
    return (1 - frac) * curve.masses[i] + frac * curve.masses[i + 1]


def regularize(curve: FineCurve, s: float, heat: HeatOperator) -> FineCurve:
    """Heat ramp from the start on [0, s], the time-squeezed curve smoothed by the heat flow
    for time s on [s, 1 - s], and the reversed ramp into the end point on [1 - s, 1].

    ``meta["heat_entropy_bound"]`` records the largest entropy of a heat-smoothed state
    used in the middle part.
    """
    if not 0 < s <= 0.5:
        raise ValueError("s must lie in (0, 1/2]")
    if heat.grid != curve.grid:
        raise ValueError("heat operator and curve use different grids")
    _fine_index(curve, s, snap=False)
    K = curve.resolution
    start, end = curve.masses[0], curve.masses[-1]
    out = []
    bound = -np.inf
    for i in range(K + 1):
        t = i / K
        if i == 0:
            out.append(start.copy())
        elif i == K:
            out.append(end.copy())
        elif t <= s + 1e-12:
            out.append(heat.apply(start, t))
        elif t >= 1 - s - 1e-12:
            out.append(heat.apply(end, 1 - t))
        else:
            u = (t - s) / (1 - 2 * s)
            smoothed = heat.apply(_state_at(curve, u), s)
            bound = max(bound, float(entropy_masses(smoothed / smoothed.sum(), curve.grid.volumes)))
            out.append(smoothed)
    masses = np.array(out)
    interior = masses[1:-1]
    interior /= interior.sum(axis=1, keepdims=True)
    masses[1:-1] = interior
    meta = dict(curve.meta, s=s, heat_entropy_bound=float(bound))
    return FineCurve(curve.grid, masses, None, meta)


def parametric_to_plan(phases) -> TrafficPlan:
    """Atomic traffic plan whose atoms are the given (curve, weight) phases."""
    phases = list(phases)
    if not phases:
        raise ValueError("need at least one phase")
    curves = [c for c, _ in phases]
    weights = np.array([float(w) for _, w in phases])
    if abs(weights.sum() - 1) > 1e-12:
        raise ValueError("phase weights must sum to 1")
    N, grid = curves[0].N, curves[0].grid
    if any(c.N != N or c.grid != grid for c in curves):
        raise ValueError("phases must share grid and time grid")
    boundary = BoundaryCoupling(tuple((c.state(0), c.state(c.N), w) for c, w in zip(curves, weights)))
    return TrafficPlan(tuple(curves), weights, boundary, tuple(range(len(curves))))


def plan_to_parametric(plan: TrafficPlan) -> list[tuple[DiscreteCurve, float]]:
    """One phase per distinct boundary pair (bitwise equality of the endpoint masses),
    holding the weighted average of the atoms that share it."""
    groups: dict[bytes, list[int]] = {}
    for m, atom in enumerate(plan.atoms):
        key = atom.masses[0].tobytes() + atom.masses[-1].tobytes()
        groups.setdefault(key, []).append(m)
    out = []
    for members in groups.values():
        w = plan.weights[members]
        total = float(w.sum())
        if len(members) == 1:
            out.append((plan.atoms[members[0]], total))
            continue
        avg = np.tensordot(w, np.stack([plan.atoms[m].masses for m in members]), axes=1) / total
        avg[0] = plan.atoms[members[0]].masses[0]
        avg[-1] = plan.atoms[members[0]].masses[-1]
        out.append((DiscreteCurve(plan.grid, avg), total))
    return out


def parametric_entropy(phases, k: int) -> float:
    return float(sum(w * entropy(c.state(k)) for c, w in phases))


def parametric_action(phases, cost: LegCost | None = None) -> float:
    return float(sum(w * discrete_curve_action(c, cost) for c, w in phases))


def resample_plan(plan: TrafficPlan, N: int) -> TrafficPlan:
    """Same plan on a new time grid: geodesic extension to a common resolution, then sampling."""
    fine = math.lcm(plan.N, N)
    atoms = tuple(sample(extend(a, fine // plan.N), N) for a in plan.atoms)
    return TrafficPlan(atoms, plan.weights, plan.boundary, plan.assignment)


def averaged_entropy_on(plan: TrafficPlan, resolution: int) -> np.ndarray:
    """Averaged entropy of the geodesically extended atoms at the times i / resolution."""
    if resolution % plan.N:
        raise ValueError("resolution must be a multiple of N")
    M = resolution // plan.N
    ent = np.array([extend(a, M).entropies() for a in plan.atoms])
    return plan.weights @ ent


__all__ = ["ACTION_TOL_CONSTANT", "action_tolerance", "FineCurve", "extend", "fine_action", "discrete_curve_action", "sample", "regularize",
           "parametric_to_plan", "plan_to_parametric", "parametric_entropy", "parametric_action",
           "resample_plan", "averaged_entropy_on"]
