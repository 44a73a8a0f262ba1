"""Quadratic-cost optimal transport between grid measures.

Measures are read as point masses at cell centers. ``w2_exact`` is the
linear-programming ground truth; ``w2_1d`` and ``w2_entropic`` are the fast paths
checked against it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .grid import Grid, GridMeasure

LP_CAP = 64
SMOOTHING = 1e-12
# Frozen from scripts/calibrate_geodesic_tolerance.py (worst ratio 1.22 on rough 1-D pairs,
# rounded up with margin): entropy along a deposited geodesic is convex up to C * cell width.
GEODESIC_ENTROPY_TOL_CONSTANT = 3.0


class TransportError(ValueError):
    pass


class SinkhornNotConverged(RuntimeError):
    def __init__(self, residual: float, iterations: int):
        super().__init__(f"Sinkhorn did not converge: marginal residual {residual:.3e} "
                         f"after {iterations} iterations")
        self.residual = residual
        self.iterations = iterations


@dataclass(frozen=True, eq=False)
class TransportPlan:
    source: GridMeasure
    target: GridMeasure
    coupling: np.ndarray  # (n_source_cells, n_target_cells)
    cost: float

    def to_dict(self) -> dict:
        rows, cols = np.nonzero(self.coupling)
        return {
            "source": self.source.to_dict(),
            "target": self.target.to_dict(),
            "entries": [[int(i), int(j), float(self.coupling[i, j])] for i, j in zip(rows, cols)],
            "cost": self.cost,
        }


def _check_pair(mu: GridMeasure, nu: GridMeasure) -> Grid:
    if mu.grid != nu.grid:
        raise TransportError("measures live on different grids")
    return mu.grid


def sq_dist(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Pairwise squared Euclidean distances between rows of ``x`` and ``y``."""
    x = np.asarray(x, dtype=float).reshape(len(x), -1)
    y = np.asarray(y, dtype=float).reshape(len(y), -1)
    return np.sum((x[:, None, :] - y[None, :, :]) ** 2, axis=-1)


def lp_transport(x: np.ndarray, a: np.ndarray, y: np.ndarray, b: np.ndarray):
    """Exact discrete OT between point clouds by the transportation LP.

    Returns ``(cost, coupling)`` with ``coupling`` of shape ``(len(a), len(b))``.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    si = np.flatnonzero(a > 0)
    tj = np.flatnonzero(b > 0)
    C = sq_dist(np.asarray(x)[si], np.asarray(y)[tj])
    n, m = len(si), len(tj)
    coupling = np.zeros((len(a), len(b)))
    if n == 1 or m == 1:
        if n == 1:
            sub = b[tj][None, :].copy()
        else:
            sub = a[si][:, None].copy()
        coupling[np.ix_(si, tj)] = sub
        return float(np.sum(sub * C)), coupling
    # HiGHS presolve misreports infeasibility when masses sit near its feasibility
    # tolerance, so it is switched off and every row and column constraint is kept;
    # masses are rescaled to O(1) so the absolute tolerances stay meaningful
    scale = n
    var = np.arange(n * m)
    A = sp.csr_matrix((np.ones(2 * n * m),
                       (np.concatenate([var // m, n + var % m]), np.concatenate([var, var]))),
                      shape=(n + m, n * m))
    rhs = np.concatenate([a[si], b[tj]]) * scale
    res = linprog(C.ravel(), A_eq=A, b_eq=rhs, bounds=(0, None), method="highs-ds",
                  options={"presolve": False, "primal_feasibility_tolerance": 1e-10,
                           "dual_feasibility_tolerance": 1e-10})
    if res.status != 0:
        raise TransportError(f"transport LP failed: {res.message}")
    sub = np.maximum(res.x.reshape(n, m), 0.0) / scale
    coupling[np.ix_(si, tj)] = sub
    return float(np.sum(sub * C)), coupling


def w2_exact(mu: GridMeasure, nu: GridMeasure, cap: int = LP_CAP):
    """Exact W2 and an optimal plan from the transportation LP (oracle path)."""
    grid = _check_pair(mu, nu)
    if grid.size > cap:
        raise TransportError(f"grid has {grid.size} cells, over the LP cap of {cap}")
    cost, coupling = lp_transport(grid.centers, mu.masses, grid.centers, nu.masses)
    cost = max(cost, 0.0)
    return float(np.sqrt(cost)), TransportPlan(mu, nu, coupling, cost)


def monotone_coupling(a: np.ndarray, b: np.ndarray):
    """North-west-corner coupling of two mass vectors on sorted 1-D supports.

    Returns ``(i, j, mass)`` arrays; this is the quantile coupling, optimal for
    any convex cost on the line.
    """
    ca = np.cumsum(a)
    cb = np.cumsum(b)
    ca[-1] = cb[-1] = 1.0
    breaks = np.union1d(ca, cb)
    breaks = breaks[breaks > 0]
    lower = np.concatenate([[0.0], breaks[:-1]])
    mass = breaks - lower
    keep = mass > 0
    mid = 0.5 * (lower + breaks)[keep]
    i = np.minimum(np.searchsorted(ca, mid), len(a) - 1)
    j = np.minimum(np.searchsorted(cb, mid), len(b) - 1)
    return i, j, mass[keep]


def w2_1d_points(x: np.ndarray, a: np.ndarray, y: np.ndarray, b: np.ndarray) -> float:
    """Squared W2 between 1-D atomic measures by quantile coupling."""
    x = np.asarray(x, dtype=float).reshape(-1)
    y = np.asarray(y, dtype=float).reshape(-1)
    ox, oy = np.argsort(x, kind="stable"), np.argsort(y, kind="stable")
    i, j, mass = monotone_coupling(np.asarray(a)[ox], np.asarray(b)[oy])
    return float(np.sum(mass * (x[ox][i] - y[oy][j]) ** 2))


def w2_1d_masses(centers: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    i, j, mass = monotone_coupling(a, b)
    return float(np.sum(mass * (centers[i] - centers[j]) ** 2))


def w2_1d(mu: GridMeasure, nu: GridMeasure) -> float:
    """Squared W2 on a 1-D grid via the quantile coupling."""
    grid = _check_pair(mu, nu)
    if grid.dim != 1:
        raise TransportError("w2_1d needs a 1-D grid")
    return w2_1d_masses(grid.centers[:, 0], mu.masses, nu.masses)


def plan_1d(mu: GridMeasure, nu: GridMeasure) -> TransportPlan:
    """The quantile (monotone) plan on a 1-D grid."""
    grid = _check_pair(mu, nu)
    if grid.dim != 1:
        raise TransportError("plan_1d needs a 1-D grid")
    i, j, mass = monotone_coupling(mu.masses, nu.masses)
    coupling = np.zeros((grid.size, grid.size))
    np.add.at(coupling, (i, j), mass)
    x = grid.centers[:, 0]
    return TransportPlan(mu, nu, coupling, float(np.sum(mass * (x[i] - x[j]) ** 2)))


def optimal_plan(mu: GridMeasure, nu: GridMeasure, cap: int = LP_CAP) -> TransportPlan:
    """Quantile plan in 1-D, LP plan otherwise."""
    if mu.grid.dim == 1:
        return plan_1d(mu, nu)
    return w2_exact(mu, nu, cap=cap)[1]


def squared_distance(mu: GridMeasure, nu: GridMeasure, cap: int = LP_CAP) -> float:
    """Exact squared W2, through the 1-D fast path when available."""
    if mu.grid.dim == 1:
        return w2_1d(mu, nu)
    return w2_exact(mu, nu, cap=cap)[1].cost


# --- entropic transport -------------------------------------------------------


@dataclass(frozen=True)
class EntropicResult:
    value: float
    potentials: tuple[np.ndarray, np.ndarray]
    residual: float
    iterations: int
    epsilon: float
    debiased: bool
    self_potentials: tuple[np.ndarray, np.ndarray] | None = None

    @property
    def gradients(self) -> tuple[np.ndarray, np.ndarray]:
        """Derivatives of ``value`` with respect to the source and target masses."""
        f, g = self.potentials
        if self.self_potentials is None:
            return f, g
        return f - self.self_potentials[0], g - self.self_potentials[1]


def smooth_masses(masses: np.ndarray, volumes: np.ndarray) -> np.ndarray:
    if np.all(masses > 0):
        return masses
    out = (1 - SMOOTHING) * masses + SMOOTHING * volumes
    return out / out.sum()


def _eps_schedule(eps: float, start: float) -> list[float]:
    schedule = [eps]
    while schedule[-1] * 2 < start:
        schedule.append(schedule[-1] * 2)
    return schedule[::-1]


def logsumexp(x: np.ndarray, axis: int) -> np.ndarray:
    """Stable log-sum-exp; scipy's version carries heavy per-call overhead on small arrays."""
    top = np.max(x, axis=axis, keepdims=True)
    top = np.where(np.isfinite(top), top, 0.0)
    with np.errstate(divide="ignore"):
        return np.log(np.sum(np.exp(x - top), axis=axis)) + np.squeeze(top, axis=axis)


def sinkhorn_log(loga, logb, C, eps, f=None, g=None, tol=1e-9, max_iter=20000,
                 scaling=True):
    """Log-domain Sinkhorn with eps-halving warm starts.

    Potentials follow the convention P = a b^T exp((f + g - C) / eps).
    Returns ``(f, g, residual, iterations)``; the residual is the L1 error of the
    source marginal after the final target update.
    """
    a = np.exp(loga)
    if f is None or g is None:
        f = np.zeros(len(loga))
        g = np.zeros(len(logb))
    schedule = _eps_schedule(eps, float(C.max())) if scaling else [eps]
    total = 0
    residual = np.inf
    for stage, e in enumerate(schedule):
        final = stage == len(schedule) - 1
        stage_tol = tol if final else max(tol, 1e-3)
        budget = max_iter - total if final else min(500, max_iter - total)
        for _ in range(max(budget, 1)):
            g = -e * logsumexp(loga[:, None] + (f[:, None] - C) / e, axis=0)
            f_new = -e * logsumexp(logb[None, :] + (g[None, :] - C) / e, axis=1)
            total += 1
            # row marginal of the plan built from (f, g) before the f update
            logrow = loga + (f - f_new) / e
            residual = float(np.sum(np.abs(np.exp(logrow) - a)))
            f = f_new
            if residual < stage_tol:
                break
    return f, g, residual, total


def sinkhorn_self(loga, C, eps, p=None, tol=1e-9, max_iter=20000):
    """Symmetric potential of OT_eps(a, a) by averaged fixed-point iteration."""
    if p is None:
        p = np.zeros(len(loga))
    a = np.exp(loga)
    residual = np.inf
    for it in range(1, max_iter + 1):
        t = -eps * logsumexp(loga[None, :] + (p[None, :] - C) / eps, axis=1)
        p_new = 0.5 * (p + t)
        residual = float(np.sum(np.abs(np.exp(loga + (p - t) / eps) - a)))
        p = p_new
        if residual < tol:
            break
    return p, residual, it


def entropic_ot(a, b, C, eps, *, debias=True, init=None, tol=1e-9, max_iter=20000,
                raise_on_fail=True, volumes=None) -> EntropicResult:
    """Entropic OT between mass vectors with cost matrix ``C``.

    ``init`` is an EntropicResult (or potentials tuple) to warm start from.
    """
    if eps <= 0:
        raise ValueError("epsilon must be positive")
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if volumes is not None:
        a = smooth_masses(a, volumes)
        b = smooth_masses(b, volumes)
    loga, logb = np.log(a), np.log(b)
    f0 = g0 = p0 = r0 = None
    if isinstance(init, EntropicResult):
        f0, g0 = init.potentials
        if init.self_potentials is not None:
            p0, r0 = init.self_potentials
    elif init is not None:
        f0, g0 = init
    f, g, residual, iters = sinkhorn_log(loga, logb, C, eps, f0, g0, tol=tol,
                                         max_iter=max_iter, scaling=f0 is None)
    value = float(a @ f + b @ g)
    self_pot = None
    if debias:
        p, rp, ip = sinkhorn_self(loga, C, eps, p0, tol=tol, max_iter=max_iter)
        r, rr, ir = sinkhorn_self(logb, C, eps, r0, tol=tol, max_iter=max_iter)
        value -= float(a @ p + b @ r)
        residual = max(residual, rp, rr)
        iters += ip + ir
        self_pot = (p, r)
    if raise_on_fail and not residual < tol:
        raise SinkhornNotConverged(residual, iters)
    return EntropicResult(value, (f, g), residual, iters, eps, debias, self_pot)


def w2_entropic(mu: GridMeasure, nu: GridMeasure, epsilon: float, *, debias: bool = True,
                init=None, tol: float = 1e-9, max_iter: int = 20000) -> EntropicResult:
    """Entropic surrogate of squared W2 and its dual potentials.

    Zero masses are smoothed by mixing ``1e-12`` of Lebesgue first. With
    ``debias`` the value is the Sinkhorn divergence, which vanishes on (mu, mu).
    """
    grid = _check_pair(mu, nu)
    C = sq_dist(grid.centers, grid.centers)
    return entropic_ot(mu.masses, nu.masses, C, epsilon, debias=debias, init=init, tol=tol,
                       max_iter=max_iter, volumes=grid.volumes)


# --- displacement interpolation ----------------------------------------------


def deposit(grid: Grid, points: np.ndarray, masses: np.ndarray) -> np.ndarray:
    """Spread point masses onto cell centers by linear / bilinear splitting.

    Preserves total mass and, away from the boundary half-cells, first moments.
    """
    points = np.asarray(points, dtype=float).reshape(len(masses), grid.dim)
    out = np.zeros(grid.shape)
    corner_idx = []
    corner_w = []
    for axis in range(grid.dim):
        n = grid.shape[axis]
        h = grid.spacing[axis]
        u = np.clip(points[:, axis] / h - 0.5, 0.0, n - 1)
        lo = np.minimum(np.floor(u).astype(np.int64), max(n - 2, 0))
        frac = u - lo
        if n == 1:
            lo = np.zeros_like(lo)
            frac = np.zeros_like(frac)
        corner_idx.append((lo, np.minimum(lo + 1, n - 1)))
        corner_w.append((1.0 - frac, frac))
    for corner in range(2**grid.dim):
        bits = [(corner >> axis) & 1 for axis in range(grid.dim)]
        idx = tuple(corner_idx[axis][bit] for axis, bit in enumerate(bits))
        w = np.prod([corner_w[axis][bit] for axis, bit in enumerate(bits)], axis=0)
        np.add.at(out, idx, masses * w)
    return out.ravel()


def pushforward_points(plan: TransportPlan, t: float):
    """Atoms of the interpolant ((1 - t) x + t y) # coupling, before grid deposit."""
    rows, cols = np.nonzero(plan.coupling)
    x = plan.source.grid.centers
    points = (1 - t) * x[rows] + t * x[cols]
    return points, plan.coupling[rows, cols]


def displacement_interpolate(plan: TransportPlan, t: float) -> GridMeasure:
    """Point on the displacement geodesic at time ``t``, deposited on the grid."""
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t must lie in [0, 1], got {t}")
    if t == 0.0:
        return plan.source
    if t == 1.0:
        return plan.target
    grid = plan.source.grid
    points, masses = pushforward_points(plan, t)
    out = deposit(grid, points, masses)
    return GridMeasure(grid, out / out.sum())


def geodesic_entropy_tolerance(grid: Grid,
                               constant: float = GEODESIC_ENTROPY_TOL_CONSTANT) -> float:
    return constant * grid.cell_width


def uniform_on(grid: Grid, cells) -> GridMeasure:
    masses = np.zeros(grid.size)
    masses[np.asarray(cells)] = grid.volumes[np.asarray(cells)]
    return GridMeasure(grid, masses / masses.sum())


__all__ = [
    "LP_CAP", "TransportError", "SinkhornNotConverged", "TransportPlan", "EntropicResult",
    "w2_exact", "w2_1d", "w2_1d_points", "w2_entropic", "entropic_ot", "plan_1d",
    "optimal_plan", "squared_distance", "displacement_interpolate", "pushforward_points",
    "deposit", "lp_transport", "monotone_coupling", "sq_dist", "uniform_on",
    "geodesic_entropy_tolerance",
]
