"""Finitely-atomic traffic plans: curves of grid measures on a uniform time grid,
their moments, averaged entropy and the penalized discrete objective."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .grid import (Grid, GridMeasure, MASS_TOL, congestion_masses, entropy_masses, lebesgue,
                   l1_distance)
from .transport import entropic_ot, lp_transport, sq_dist, w2_1d_masses


@dataclass(frozen=True, eq=False)
class DiscreteCurve:
    """States at times k / N, k = 0..N, stored as an (N + 1, cells) mass array."""

    grid: Grid
    masses: np.ndarray

    def __post_init__(self) -> None:
        masses = np.array(self.masses, dtype=float)
        if masses.ndim != 2 or masses.shape[1] != self.grid.size or masses.shape[0] < 2:
            raise ValueError(f"expected (N+1, {self.grid.size}) masses with N >= 1, "
                             f"got {masses.shape}")
        if np.any(masses < 0) or np.any(np.abs(masses.sum(axis=1) - 1) > MASS_TOL):
            raise ValueError("every state must be a probability vector")
        masses.setflags(write=False)
        object.__setattr__(self, "masses", masses)

    @property
    def N(self) -> int:
        return self.masses.shape[0] - 1

    @property
    def tau(self) -> float:
        return 1.0 / self.N

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.N + 1) / self.N

    @property
    def states(self) -> list[GridMeasure]:
        return [GridMeasure(self.grid, m) for m in self.masses]

    def state(self, k: int) -> GridMeasure:
        return GridMeasure(self.grid, self.masses[k])

    @classmethod
    def from_states(cls, states) -> "DiscreteCurve":
        states = list(states)
        grid = states[0].grid
        if any(s.grid != grid for s in states):
            raise ValueError("states live on different grids")
        return cls(grid, np.stack([s.masses for s in states]))

    @classmethod
    def constant(cls, mu: GridMeasure, N: int) -> "DiscreteCurve":
        return cls(mu.grid, np.tile(mu.masses, (N + 1, 1)))


@dataclass(frozen=True, eq=False)
class BoundaryCoupling:
    """Weighted (initial, final) pairs whose averages are both Lebesgue."""

    pairs: tuple[tuple[GridMeasure, GridMeasure, float], ...]

    def __post_init__(self) -> None:
        pairs = tuple((r0, r1, float(w)) for r0, r1, w in self.pairs)
        if not pairs:
            raise ValueError("boundary coupling needs at least one pair")
        grid = pairs[0][0].grid
        if any(r0.grid != grid or r1.grid != grid for r0, r1, _ in pairs):
            raise ValueError("boundary measures live on different grids")
        w = np.array([p[2] for p in pairs])
        if np.any(w <= 0) or abs(w.sum() - 1) > 1e-12:
            raise ValueError("pair weights must be positive and sum to 1")
        object.__setattr__(self, "pairs", pairs)

    @property
    def grid(self) -> Grid:
        return self.pairs[0][0].grid

    @property
    def weights(self) -> np.ndarray:
        return np.array([p[2] for p in self.pairs])

    def moment(self, end: int) -> np.ndarray:
        return sum(w * (r0 if end == 0 else r1).masses for r0, r1, w in self.pairs)

    def incompressibility_gap(self) -> float:
        leb = self.grid.volumes
        return max(float(np.abs(self.moment(0) - leb).sum()),
                   float(np.abs(self.moment(1) - leb).sum()))

    def check_incompressible(self, tol: float = 1e-8) -> None:
        gap = self.incompressibility_gap()
        if gap > tol:
            raise ValueError(f"boundary moments differ from Lebesgue by {gap:.3e} in L1")


@dataclass(frozen=True, eq=False)
class TrafficPlan:
    """Atoms (discrete curves) with weights; atom ``m`` realizes boundary pair ``assignment[m]``."""

    atoms: tuple[DiscreteCurve, ...]
    weights: np.ndarray
    boundary: BoundaryCoupling
    assignment: tuple[int, ...]

    def __post_init__(self) -> None:
        atoms = tuple(self.atoms)
        weights = np.array(self.weights, dtype=float)
        assignment = tuple(int(a) for a in self.assignment)
        if not (len(atoms) == len(weights) == len(assignment)) or not atoms:
            raise ValueError("atoms, weights and assignment must have equal nonzero length")
        if np.any(weights <= 0) or abs(weights.sum() - 1) > 1e-12:
            raise ValueError("atom weights must be positive and sum to 1")
        N = atoms[0].N
        if any(a.N != N or a.grid != atoms[0].grid for a in atoms):
            raise ValueError("atoms must share grid and time grid")
        per_pair = np.zeros(len(self.boundary.pairs))
        for atom, w, p in zip(atoms, weights, assignment):
            r0, r1, _ = self.boundary.pairs[p]
            if not (np.array_equal(atom.masses[0], r0.masses)
                    and np.array_equal(atom.masses[-1], r1.masses)):
                raise ValueError(f"atom endpoints differ from boundary pair {p}")
            per_pair[p] += w
        if np.abs(per_pair - self.boundary.weights).max() > 1e-12:
            raise ValueError("atom weights do not reproduce the boundary coupling")
        weights.setflags(write=False)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "assignment", assignment)

    @property
    def grid(self) -> Grid:
        return self.atoms[0].grid

    @property
    def N(self) -> int:
        return self.atoms[0].N

    def stack(self) -> np.ndarray:
        """All atom masses as an (atoms, N + 1, cells) array."""
        return np.stack([a.masses for a in self.atoms])

    def with_masses(self, stack: np.ndarray) -> "TrafficPlan":
        """Same plan with new atom states (endpoints must be unchanged)."""
        atoms = tuple(DiscreteCurve(self.grid, s) for s in stack)
        return replace(self, atoms=atoms)

    @classmethod
    def from_boundary(cls, boundary: BoundaryCoupling, interiors) -> "TrafficPlan":
        """One atom per boundary pair; ``interiors[m]`` holds the N - 1 interior states."""
        atoms = []
        for (r0, r1, _), inner in zip(boundary.pairs, interiors):
            inner = np.asarray(inner, dtype=float).reshape(-1, boundary.grid.size)
            atoms.append(DiscreteCurve(boundary.grid, np.vstack([r0.masses, inner, r1.masses])))
        return cls(tuple(atoms), boundary.weights, boundary, tuple(range(len(atoms))))


@dataclass(frozen=True)
class ObjectiveParams:
    N: int
    q: float = 2.0
    lam: float = 0.1
    epsilon: float = 1e-3
    use_exact_w2: bool = True

    def __post_init__(self) -> None:
        if int(self.N) < 1:
            raise ValueError("N must be at least 1")
        if not self.q > 1:
            raise ValueError("q must exceed 1")
        if self.lam < 0:
            raise ValueError("lambda must be nonnegative")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")

    @property
    def tau(self) -> float:
        return 1.0 / self.N

    @property
    def metric(self) -> str:
        return "exact" if self.use_exact_w2 else "entropic"

    def to_dict(self) -> dict:
        return {"N": self.N, "q": self.q, "lambda": self.lam, "epsilon": self.epsilon,
                "use_exact_w2": self.use_exact_w2}

    @classmethod
    def from_dict(cls, data: dict) -> "ObjectiveParams":
        return cls(N=int(data["N"]), q=float(data.get("q", 2.0)),
                   lam=float(data.get("lambda", data.get("lam", 0.1))),
                   epsilon=float(data.get("epsilon", 1e-3)),
                   use_exact_w2=bool(data.get("use_exact_w2", True)))


# --- leg costs ----------------------------------------------------------------


@dataclass(eq=False)
class LegCost:
    """Squared-W2 evaluator for one grid and metric choice; caches the cost matrix."""

    grid: Grid
    exact: bool = True
    epsilon: float = 1e-3
    cost_matrix: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.cost_matrix = sq_dist(self.grid.centers, self.grid.centers)

    @classmethod
    def for_params(cls, grid: Grid, params: ObjectiveParams) -> "LegCost":
        return cls(grid, params.use_exact_w2, params.epsilon)

    def __call__(self, a: np.ndarray, b: np.ndarray) -> float:
        if self.exact:
            if self.grid.dim == 1:
                return w2_1d_masses(self.grid.centers[:, 0], a, b)
            return lp_transport(self.grid.centers, a, self.grid.centers, b)[0]
        return entropic_ot(a, b, self.cost_matrix, self.epsilon, volumes=self.grid.volumes,
                           raise_on_fail=False).value


# --- plan functionals -----------------------------------------------------------


def moment_masses(stack: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Weighted average over atoms: (atoms, ..., cells) -> (..., cells)."""
    return np.tensordot(weights, stack, axes=1)


def moment(plan: TrafficPlan, k: int) -> GridMeasure:
    _check_index(plan, k)
    return GridMeasure(plan.grid, moment_masses(plan.stack()[:, k], plan.weights))


def averaged_entropy(plan: TrafficPlan, k: int) -> float:
    _check_index(plan, k)
    return float(plan.weights @ entropy_masses(plan.stack()[:, k], plan.grid.volumes))


def entropy_profile(plan: TrafficPlan) -> np.ndarray:
    """Averaged entropy at every time index."""
    return plan.weights @ entropy_masses(plan.stack(), plan.grid.volumes)


def _check_index(plan: TrafficPlan, k: int) -> None:
    if not 0 <= k <= plan.N:
        raise IndexError(f"time index {k} outside 0..{plan.N}")


def _check_params(plan: TrafficPlan, params: ObjectiveParams) -> None:
    if plan.N != params.N:
        raise ValueError(f"plan has N={plan.N} but params have N={params.N}")


def leg_costs(stack: np.ndarray, cost: LegCost) -> np.ndarray:
    """Squared W2 of every (atom, leg): shape (atoms, N)."""
    M, T, _ = stack.shape
    return np.array([[cost(stack[m, k - 1], stack[m, k]) for k in range(1, T)]
                     for m in range(M)])


def discrete_action(plan: TrafficPlan, params: ObjectiveParams, cost: LegCost | None = None) -> float:
    _check_params(plan, params)
    cost = cost or LegCost.for_params(plan.grid, params)
    legs = leg_costs(plan.stack(), cost)
    return float(plan.weights @ legs.sum(axis=1) / (2 * params.tau))


def objective_parts(stack: np.ndarray, weights: np.ndarray, grid: Grid,
                    params: ObjectiveParams, cost: LegCost, legs: np.ndarray | None = None) -> dict:
    """Objective parts from raw arrays; interior sums only touch k = 1..N-1."""
    tau = params.tau
    if legs is None:
        legs = leg_costs(stack, cost)
    action = float(weights @ legs.sum(axis=1) / (2 * tau))
    interior = stack[:, 1:-1]
    cong = float(np.sum(congestion_masses(moment_masses(interior, weights), grid.volumes,
                                          params.q))) if interior.shape[1] else 0.0
    ent = float(np.sum(weights @ entropy_masses(interior, grid.volumes))) if interior.shape[1] else 0.0
    return {"action": action, "congestion": cong, "entropy_penalty": params.lam * tau * ent}


def objective_dp(plan: TrafficPlan, params: ObjectiveParams, cost: LegCost | None = None):
    """Total penalized objective and its three parts."""
    _check_params(plan, params)
    cost = cost or LegCost.for_params(plan.grid, params)
    parts = objective_parts(plan.stack(), plan.weights, plan.grid, params, cost)
    return parts["action"] + parts["congestion"] + parts["entropy_penalty"], parts


def incompressibility_residual(plan: TrafficPlan) -> float:
    """Largest interior L1 gap between the moment and Lebesgue (0 when N = 1)."""
    if plan.N < 2:
        return 0.0
    leb = lebesgue(plan.grid)
    return max(l1_distance(moment(plan, k), leb) for k in range(1, plan.N))


def convexity_residuals(profile) -> np.ndarray:
    """Second differences H(k-1) + H(k+1) - 2 H(k) for interior k."""
    h = np.asarray(profile, dtype=float)
    return h[:-2] + h[2:] - 2 * h[1:-1]
