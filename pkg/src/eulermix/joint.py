"""Joint convex program for the discrete problem with exact squared-W2 legs.

Interior states and every leg coupling are optimized together: the legs are transport
LPs, congestion is a power cone and the entropy an exponential cone. Couplings are
restricted to a band around the diagonal; the band is accepted only if no excluded
entry has negative reduced cost under the returned duals, otherwise it is doubled.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass

import cvxpy as cp
import numpy as np
import scipy.sparse as sp

from .instances import Instance
from .traffic_plan import ObjectiveParams

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class JointSolution:
    interiors: np.ndarray  # (atoms, N - 1, cells)
    value: float
    band: int
    min_reduced_cost: float
    status: str


def _band_pairs(grid, band: int):
    idx = np.indices(grid.shape).reshape(grid.dim, -1).T
    gap = np.abs(idx[:, None, :] - idx[None, :, :]).max(axis=-1)
    return np.nonzero(gap <= band)


def default_band(grid, N: int) -> int:
    return max(4, math.ceil(1.5 * max(grid.shape) / N))


def _solve_band(instance: Instance, params: ObjectiveParams, band: int, tol: float):
    grid = instance.grid
    n, N = grid.size, params.N
    v, tau = grid.volumes, params.tau
    pairs = instance.boundary.pairs
    M = len(pairs)
    w = instance.boundary.weights
    C = np.sum((grid.centers[:, None, :] - grid.centers[None, :, :]) ** 2, axis=-1)
    I, J = _band_pairs(grid, band)
    E = len(I)
    cost = C[I, J]
    R = sp.csr_matrix((np.ones(E), (I, np.arange(E))), shape=(n, E))
    S = sp.csr_matrix((np.ones(E), (J, np.arange(E))), shape=(n, E))

    # densities and couplings rescaled by the mean cell volume keep every variable O(1)
    unit = float(v.mean())
    dens = cp.Variable((M * (N - 1), n), nonneg=True)
    P = cp.Variable((M * N, E), nonneg=True)
    constraints = []
    action = 0
    for m, (r0, r1, wm) in enumerate(pairs):
        states = cp.vstack([r0.masses[None, :] / v, dens[m * (N - 1):(m + 1) * (N - 1)],
                            r1.masses[None, :] / v])
        Pm = P[m * N:(m + 1) * N]
        vcol = v[:, None] / unit
        constraints += [R @ Pm.T == cp.multiply(vcol, states[:-1].T),
                        S @ Pm.T == cp.multiply(vcol, states[1:].T)]
        action += wm * unit / (2 * tau) * cp.sum(Pm @ cost)
    moment = sum(w[m] * dens[m * (N - 1):(m + 1) * (N - 1)] for m in range(M))
    vrow = np.tile(v, (N - 1, 1))
    objective = action + cp.sum(cp.multiply(vrow, cp.power(moment, params.q))) - (N - 1)
    if params.lam > 0:
        ent_w = np.repeat(w, N - 1)[:, None] * params.lam * tau * v[None, :]
        objective += cp.sum(cp.multiply(ent_w, -cp.entr(dens)))
    problem = cp.Problem(cp.Minimize(objective), constraints)
    with warnings.catch_warnings():
        # an inaccurate status is recorded in the result and the polish stage follows
        warnings.simplefilter("ignore", UserWarning)
        problem.solve(solver="CLARABEL", tol_gap_abs=tol, tol_gap_rel=tol, max_iter=500)
    if problem.status in ("infeasible", "infeasible_inaccurate"):
        return None
    if problem.status not in ("optimal", "optimal_inaccurate"):
        raise RuntimeError(f"joint convex solve failed with status {problem.status}")

    # reduced costs of all entries outside the band, leg by leg
    outside = np.ones((n, n), dtype=bool)
    outside[I, J] = False
    min_rc = np.inf
    for m in range(M):
        y = np.asarray(constraints[2 * m].dual_value)
        z = np.asarray(constraints[2 * m + 1].dual_value)
        for k in range(N):
            rc = w[m] * unit / (2 * tau) * C + y[:, k][:, None] + z[:, k][None, :]
            if outside.any():
                min_rc = min(min_rc, float(rc[outside].min()))
    rows = (np.clip(dens.value, 0.0, None) * v).reshape(M, N - 1, n)
    return rows, float(problem.value), min_rc, problem.status


def solve_joint(instance: Instance, params: ObjectiveParams, band: int | None = None,
                tol: float = 1e-10) -> JointSolution:
    """Optimal interior states of every atom (one atom per boundary pair)."""
    if not params.use_exact_w2:
        raise ValueError("the joint program uses exact squared-W2 legs")
    if params.N < 2:
        raise ValueError("no interior states for N < 2")
    grid = instance.grid
    band = default_band(grid, params.N) if band is None else band
    width = max(grid.shape)
    while True:
        result = _solve_band(instance, params, band, tol)
        if result is None:
            if band >= width - 1:
                raise RuntimeError("joint convex program infeasible with a full band")
            log.info("band %d infeasible; widening", band)
            band = min(2 * band, width - 1)
            continue
        rows, value, min_rc, status = result
        # the reduced-cost scale is the leg weight / (2 tau); allow solver-level slack
        if band >= width - 1 or min_rc >= -1e-6:
            break
        log.info("band %d has reduced cost %.3e; widening", band, min_rc)
        band = min(2 * band, width - 1)
    rows = rows / rows.sum(axis=-1, keepdims=True)
    return JointSolution(rows, value, band, min_rc, status)
