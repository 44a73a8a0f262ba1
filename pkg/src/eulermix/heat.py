"""Neumann heat semigroup on a grid and numerical checks of its gradient-flow inequalities."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .grid import Grid, GridMeasure, entropy, lebesgue, lq_norm
from .transport import w2_exact

# Frozen from scripts/calibrate_heat_tolerance.py (worst ratio 5.9 over rough and smooth
# random pairs, doubled); tol(h, grid) = C * (h + cell width).
EVI_TOL_CONSTANT = 12.0


def neumann_laplacian(grid: Grid) -> sp.csc_matrix:
    """Graph Laplacian acting on cell masses: zero row sums, nonpositive off-diagonals."""
    n = grid.size
    i, j = grid.edges[:, 0], grid.edges[:, 1]
    # uniform volumes, so the mass and density forms differ by a scalar
    rate = grid.edge_weights / grid.volumes[i]
    off = sp.coo_matrix((np.concatenate([-rate, -rate]),
                         (np.concatenate([i, j]), np.concatenate([j, i]))), shape=(n, n))
    diag = -np.asarray(off.sum(axis=1)).ravel()
    return (off + sp.diags(diag)).tocsc()


@dataclass(frozen=True, eq=False)
class HeatOperator:
    """Implicit-Euler heat flow; ``substep`` is the longest step length used."""

    grid: Grid
    substep: float = 1e-3
    laplacian: sp.csc_matrix = field(init=False, repr=False)
    _factors: dict = field(init=False, repr=False, default_factory=dict)

    def __post_init__(self) -> None:
        if not self.substep > 0:
            raise ValueError("substep must be positive")
        object.__setattr__(self, "laplacian", neumann_laplacian(self.grid))

    def n_steps(self, s: float) -> int:
        return max(1, math.ceil(s / self.substep - 1e-9))

    def _solve(self, dt: float):
        key = round(dt, 15)
        lu = self._factors.get(key)
        if lu is None:
            lu = splu((sp.identity(self.grid.size, format="csc") + dt * self.laplacian).tocsc())
            self._factors[key] = lu
        return lu.solve

    def apply(self, masses: np.ndarray, s: float) -> np.ndarray:
        """Heat flow on raw mass vectors (last axis = cells)."""
        if s < 0:
            raise ValueError("heat time must be nonnegative")
        masses = np.asarray(masses, dtype=float)
        if s == 0:
            return masses.copy()
        n = self.n_steps(s)
        solve = self._solve(s / n)
        leb = self.grid.volumes
        # solve for the deviation from Lebesgue so that Lebesgue is fixed exactly
        dev = (masses - leb).reshape(-1, self.grid.size).T.copy()
        for _ in range(n):
            dev = solve(dev)
            if not np.all(np.isfinite(dev)):
                raise np.linalg.LinAlgError("heat step produced non-finite values")
        out = np.maximum(dev.T + leb, 0.0)
        return out.reshape(masses.shape)


def heat_step(op: HeatOperator, mu: GridMeasure, s: float) -> GridMeasure:
    if mu.grid != op.grid:
        raise ValueError("measure and heat operator use different grids")
    if s == 0:
        return mu
    return GridMeasure(op.grid, op.apply(mu.masses, s))


@dataclass(frozen=True)
class EntropyDecreaseReport:
    times: list[float]
    entropies: list[float]
    sup_densities: list[float]
    monotone: bool


def check_entropy_decrease(op: HeatOperator, mu: GridMeasure, s_list) -> EntropyDecreaseReport:
    """Entropy and sup-norm of the density along the flow at the given times."""
    s_list = [float(s) for s in s_list]
    if any(s < 0 for s in s_list) or any(b < a for a, b in zip(s_list, s_list[1:])):
        raise ValueError("times must be nonnegative and increasing")
    ent, sup = [], []
    current, t = mu, 0.0
    for s in s_list:
        current = heat_step(op, current, s - t)
        t = s
        ent.append(entropy(current))
        sup.append(float(current.density.max()))
    monotone = all(b <= a for a, b in zip(ent, ent[1:]))
    return EntropyDecreaseReport(s_list, ent, sup, monotone)


def discretization_tolerance(h: float, grid: Grid, constant: float = EVI_TOL_CONSTANT) -> float:
    return constant * (h + grid.cell_width)


@dataclass(frozen=True)
class EVIResult:
    lhs: float
    rhs: float
    gap: float
    tol: float

    @property
    def ok(self) -> bool:
        return self.gap >= -self.tol


def check_evi(op: HeatOperator, mu: GridMeasure, nu: GridMeasure, h: float,
              constant: float = EVI_TOL_CONSTANT) -> EVIResult:
    """One-sided difference quotient of W2^2(heat(mu), nu) / 2 against H(nu) - H(mu)."""
    if not h > 0:
        raise ValueError("h must be positive")
    before = w2_exact(mu, nu)[1].cost
    after = w2_exact(heat_step(op, mu, h), nu)[1].cost
    lhs = (after - before) / (2 * h)
    rhs = entropy(nu) - entropy(mu)
    return EVIResult(lhs, rhs, rhs - lhs, discretization_tolerance(h, op.grid, constant))


@dataclass(frozen=True)
class ContractionResult:
    before: float
    after: float
    tol: float
    lq_before: dict = field(default_factory=dict)
    lq_after: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        lq_ok = all(self.lq_after[k] <= self.lq_before[k] for k in self.lq_before)
        return self.after <= self.before + self.tol and lq_ok


def check_contraction(op: HeatOperator, mu: GridMeasure, nu: GridMeasure, s: float,
                      constant: float = EVI_TOL_CONSTANT, qs=(2, 4)) -> ContractionResult:
    """W2 before and after running the flow on both measures, plus L^q norms of both."""
    before = w2_exact(mu, nu)[0]
    if s == 0:
        return ContractionResult(before, before, 0.0)
    hmu, hnu = heat_step(op, mu, s), heat_step(op, nu, s)
    after = w2_exact(hmu, hnu)[0]
    lq_before = {f"{name}{q}": lq_norm(m, q) for q in qs for name, m in (("mu_L", mu), ("nu_L", nu))}
    lq_after = {f"{name}{q}": lq_norm(m, q) for q in qs for name, m in (("mu_L", hmu), ("nu_L", hnu))}
    tol = discretization_tolerance(min(s, op.substep), op.grid, constant)
    return ContractionResult(before, after, tol, lq_before, lq_after)


def leb_is_fixed(op: HeatOperator, s: float) -> bool:
    leb = lebesgue(op.grid)
    return np.array_equal(heat_step(op, leb, s).masses, leb.masses)
