"""Minimization of the penalized discrete problem over the interior states of each atom.

Two optimizers are available. With exact W2 legs and one atom per boundary pair the
default is the joint convex program of ``eulermix.joint``. Otherwise it is block mirror
descent: multiplicative updates on each interior mass vector, with gradients from
entropic-OT dual potentials and exact congestion / entropy derivatives, and each update
kept only if the re-evaluated objective strictly decreases. Either way a perturbation
search over heat-flow and pairwise mass-transfer moves polishes the point and doubles
as the stationarity check.
"""

from __future__ import annotations

import itertools
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .grid import entropy_masses
from .heat import HeatOperator
from .instances import Instance
from .traffic_plan import (LegCost, ObjectiveParams, TrafficPlan, convexity_residuals,
                           entropy_profile, incompressibility_residual, leg_costs,
                           objective_parts)
from .transport import displacement_interpolate, entropic_ot, optimal_plan, sq_dist

log = logging.getLogger(__name__)

DEFAULT_S_PROBE = (1e-5, 1e-4, 1e-3, 1e-2)


@dataclass
class SolverConfig:
    max_outer_iters: int = 300
    step_size: float = 0.5
    tol_objective: float = 1e-8
    schedule: list[ObjectiveParams] | None = None
    seed: int = 0
    tol_convexity: float = 1e-6
    method: str = "auto"
    init_mix: float = 0.05
    s_probe: tuple[float, ...] = DEFAULT_S_PROBE
    heat_substep: float = 1e-3
    transfer_fractions: tuple[float, ...] = (0.1, 0.01, 0.001)
    polish_rounds: int = 50
    sinkhorn_tol: float = 1e-7
    # duals only steer the descent (moves are accepted on the exact objective)
    sinkhorn_max_iter: int = 2000
    threads: int = 1

    def __post_init__(self) -> None:
        if self.schedule is not None and not self.schedule:
            raise ValueError("schedule must be nonempty")
        if min(self.tol_objective, self.tol_convexity, self.step_size) <= 0:
            raise ValueError("tolerances and step size must be positive")
        if self.method not in ("auto", "joint", "mirror"):
            raise ValueError(f"unknown method {self.method!r}")

    def threshold(self, objective: float) -> float:
        """Absolute size below which an objective change counts as no change."""
        return self.tol_objective * max(1.0, abs(objective))

    def to_dict(self) -> dict:
        out = {k: v for k, v in self.__dict__.items() if k != "schedule"}
        out["s_probe"] = list(self.s_probe)
        out["transfer_fractions"] = list(self.transfer_fractions)
        out["schedule"] = None if self.schedule is None else [p.to_dict() for p in self.schedule]
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "SolverConfig":
        data = dict(data)
        schedule = data.pop("schedule", None)
        if schedule is not None:
            data["schedule"] = [ObjectiveParams.from_dict(p) for p in schedule]
        for key in ("s_probe", "transfer_fractions"):
            if key in data:
                data[key] = tuple(float(x) for x in data[key])
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown solver config keys: {sorted(unknown)}")
        return cls(**data)


@dataclass
class Certificate:
    deltas: list[list[float]]  # [interior k][probe s]
    s_probe: list[float]
    convexity_residuals: list[float]
    tol: float
    tol_convexity: float

    @property
    def min_delta(self) -> float:
        return min((d for row in self.deltas for d in row), default=0.0)

    @property
    def heat_ok(self) -> bool:
        return self.min_delta >= -self.tol

    @property
    def convexity_ok(self) -> bool:
        return all(r >= -self.tol_convexity for r in self.convexity_residuals)

    @property
    def passed(self) -> bool:
        return self.heat_ok and self.convexity_ok

    def improving_directions(self) -> list[tuple[int, float, float]]:
        """(k, s, delta) for every probe that lowers the objective beyond tolerance."""
        return [(k + 1, s, d) for k, row in enumerate(self.deltas)
                for s, d in zip(self.s_probe, row) if d < -self.tol]

    def to_dict(self) -> dict:
        return {"s_probe": self.s_probe, "deltas": self.deltas, "min_delta": self.min_delta,
                "convexity_residuals": self.convexity_residuals, "tol": self.tol,
                "tol_convexity": self.tol_convexity, "heat_ok": self.heat_ok,
                "convexity_ok": self.convexity_ok, "passed": self.passed}


@dataclass
class SolveReport:
    final_plan: TrafficPlan
    params: ObjectiveParams
    objective: float
    parts: dict
    objective_trace: list[dict]
    entropy_profile: list[float]
    convexity_residuals: list[float]
    incompressibility_trace: list[dict]
    certificate: Certificate
    stationarity: dict
    converged: bool
    config: SolverConfig
    stages: list[dict] = field(default_factory=list)

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.params.N + 1) / self.params.N

    def to_dict(self) -> dict:
        return {
            "metric": self.params.metric,
            "params": self.params.to_dict(),
            "objective": self.objective,
            "parts": self.parts,
            "converged": self.converged,
            "tol_convexity": self.config.tol_convexity,
            "entropy_profile": [{"k": k, "t": float(t), "H": h} for k, (t, h)
                                in enumerate(zip(self.times, self.entropy_profile))],
            "convexity_residuals": self.convexity_residuals,
            "incompressibility_trace": self.incompressibility_trace,
            "certificate": self.certificate.to_dict(),
            "stationarity": self.stationarity,
            "objective_trace": self.objective_trace,
            "stages": self.stages,
            # thread count lives in the run manifest so reports compare across it
            "config": {k: v for k, v in self.config.to_dict().items() if k != "threads"},
            "plan": {"weights": [float(w) for w in self.final_plan.weights],
                     "assignment": list(self.final_plan.assignment),
                     "atoms": [[[float(x) for x in row] for row in a.masses]
                               for a in self.final_plan.atoms]},
        }


# --- initialization -------------------------------------------------------------


def geodesic_plan(instance: Instance, N: int, mix: float = 0.05) -> TrafficPlan:
    """Interior states on the displacement geodesic of each boundary pair, mixed with Lebesgue."""
    grid = instance.grid
    interiors = []
    for r0, r1, _ in instance.boundary.pairs:
        if np.array_equal(r0.masses, r1.masses):
            inner = np.tile(r0.masses, (N - 1, 1))
        else:
            plan = optimal_plan(r0, r1)
            inner = np.array([displacement_interpolate(plan, k / N).masses
                              for k in range(1, N)]).reshape(N - 1, grid.size)
        if len(inner) and mix > 0 and not np.array_equal(r0.masses, r1.masses):
            inner = (1 - mix) * inner + mix * grid.volumes
        if len(inner):
            inner = inner / inner.sum(axis=1, keepdims=True)
        interiors.append(inner)
    return TrafficPlan.from_boundary(instance.boundary, interiors)


# --- objective workspace ----------------------------------------------------------


class _Workspace:
    """Mutable copy of the interior states with cached leg costs and dual potentials."""

    def __init__(self, plan: TrafficPlan, params: ObjectiveParams, config: SolverConfig):
        self.grid = plan.grid
        self.params = params
        self.config = config
        self.weights = np.asarray(plan.weights, dtype=float)
        self.stack = plan.stack().copy()
        self.cost = LegCost.for_params(self.grid, params)
        self.C = sq_dist(self.grid.centers, self.grid.centers)
        self.legs = leg_costs(self.stack, self.cost)
        self.potentials: dict = {}
        self.executor = ThreadPoolExecutor(config.threads) if config.threads > 1 else None

    @property
    def M(self) -> int:
        return self.stack.shape[0]

    @property
    def N(self) -> int:
        return self.stack.shape[1] - 1

    def close(self) -> None:
        if self.executor is not None:
            self.executor.shutdown()

    def _map(self, fn, items):
        if self.executor is None:
            return [fn(x) for x in items]
        return list(self.executor.map(fn, items))

    def parts(self) -> dict:
        return objective_parts(self.stack, self.weights, self.grid, self.params, self.cost,
                               legs=self.legs)

    def total(self) -> float:
        p = self.parts()
        return p["action"] + p["congestion"] + p["entropy_penalty"]

    def local_terms(self, k: int, block: np.ndarray, legs_prev, legs_next) -> float:
        """Objective terms that involve time k, for interior states ``block``."""
        tau, v = self.params.tau, self.grid.volumes
        moment = self.weights @ block
        cong = float(np.sum(v * (moment / v) ** self.params.q)) - 1.0
        ent = float(self.weights @ entropy_masses(block, v))
        action = float(self.weights @ (np.asarray(legs_prev) + np.asarray(legs_next))) / (2 * tau)
        return action + cong + self.params.lam * tau * ent

    def block_legs(self, k: int, block: np.ndarray, atoms=None):
        atoms = range(self.M) if atoms is None else atoms
        prev = self.legs[:, k - 1].copy()
        nxt = self.legs[:, k].copy()
        for m, (a, b) in zip(atoms, self._map(
                lambda m: (self.cost(self.stack[m, k - 1], block[m]),
                           self.cost(block[m], self.stack[m, k + 1])), atoms)):
            prev[m], nxt[m] = a, b
        return prev, nxt

    def current_local(self, k: int) -> float:
        return self.local_terms(k, self.stack[:, k], self.legs[:, k - 1], self.legs[:, k])

    def commit(self, k: int, block: np.ndarray, prev, nxt) -> None:
        self.stack[:, k] = block
        self.legs[:, k - 1] = prev
        self.legs[:, k] = nxt

    def _dual(self, m: int, leg: int):
        a, b = self.stack[m, leg], self.stack[m, leg + 1]
        key = (m, leg)
        res = entropic_ot(a, b, self.C, self.params.epsilon, debias=True,
                          init=self.potentials.get(key), tol=self.config.sinkhorn_tol,
                          max_iter=self.config.sinkhorn_max_iter, raise_on_fail=False,
                          volumes=self.grid.volumes)
        if not np.all(np.isfinite(res.potentials[0])):
            res = entropic_ot(a, b, self.C, self.params.epsilon, debias=True,
                              tol=self.config.sinkhorn_tol,
                              max_iter=self.config.sinkhorn_max_iter, raise_on_fail=False,
                              volumes=self.grid.volumes)
        self.potentials[key] = res
        return res

    def smooth_gradient(self, k: int) -> np.ndarray:
        """Congestion and entropy part of the gradient at time k, divided by the atom weight."""
        tau, v, q = self.params.tau, self.grid.volumes, self.params.q
        block = self.stack[:, k]
        cong = q * (self.weights @ block / v) ** (q - 1)
        ent = np.log(np.maximum(block, 1e-300) / v) + 1.0
        return cong[None, :] + self.params.lam * tau * ent

    def gradient(self, k: int) -> np.ndarray:
        """Per-atom gradient at time k, divided by the atom weight."""
        tau = self.params.tau

        def action_grad(m):
            into = self._dual(m, k - 1).gradients[1]
            out = self._dual(m, k).gradients[0]
            return (into + out) / (2 * tau)

        return np.array(self._map(action_grad, range(self.M))) + self.smooth_gradient(k)


# --- descent ----------------------------------------------------------------------


def _mirror_block(ws: _Workspace, k: int, eta: float, max_halvings: int = 30):
    """One multiplicative step on all atoms at time k; returns (new eta, decrease)."""
    grad = ws.gradient(k)
    cur = ws.stack[:, k]
    old = ws.current_local(k)
    shifted = grad - grad.min(axis=1, keepdims=True)
    for _ in range(max_halvings):
        new = cur * np.exp(-eta * shifted)
        new = np.maximum(new / new.sum(axis=1, keepdims=True), 1e-300)
        new /= new.sum(axis=1, keepdims=True)
        prev, nxt = ws.block_legs(k, new)
        value = ws.local_terms(k, new, prev, nxt)
        if value < old:
            ws.commit(k, new, prev, nxt)
            return min(eta * 1.5, 1e6), old - value
        eta *= 0.5
    return eta, 0.0


def _transfer_candidates(ws: _Workspace, k: int, m: int, grad_row: np.ndarray):
    """Adjacent cell pairs in both directions plus the pair (largest, smallest) gradient."""
    pairs = {(int(i), int(j)) for i, j in ws.grid.edges}
    pairs |= {(j, i) for i, j in pairs}
    src = int(np.argmax(np.where(ws.stack[m, k] > 0, grad_row, -np.inf)))
    dst = int(np.argmin(grad_row))
    if src != dst:
        pairs.add((src, dst))
    return sorted(p for p in pairs if ws.stack[m, k, p[0]] > 0)


def _best_transfer(ws: _Workspace, k: int):
    """Best single-atom mass transfer between two cells at time k: (gain, block, prev, nxt).

    The guiding gradient is the smooth part only (congestion and entropy), so no
    transport duals are needed.
    """
    best = (0.0, None, None, None)
    old = ws.current_local(k)
    grad = ws.smooth_gradient(k)
    for m in range(ws.M):
        for i, j in _transfer_candidates(ws, k, m, grad[m]):
            for frac in ws.config.transfer_fractions:
                block = ws.stack[:, k].copy()
                delta = frac * block[m, i]
                block[m, i] -= delta
                block[m, j] += delta
                prev, nxt = ws.block_legs(k, block, atoms=[m])
                gain = old - ws.local_terms(k, block, prev, nxt)
                if gain > best[0]:
                    best = (gain, block, prev, nxt)
    return best


def _heat_block(ws: _Workspace, heat: HeatOperator, k: int, s: float):
    block = heat.apply(ws.stack[:, k], s)
    block /= block.sum(axis=1, keepdims=True)
    prev, nxt = ws.block_legs(k, block)
    return ws.local_terms(k, block, prev, nxt) - ws.current_local(k), block, prev, nxt


def _local_delta_heat(ws: _Workspace, heat: HeatOperator, k: int, s: float) -> float:
    if s == 0:
        return 0.0
    return _heat_block(ws, heat, k, s)[0]


def _record(ws: _Workspace, trace: list, stage: int, it: int, phase: str) -> float:
    parts = ws.parts()
    total = parts["action"] + parts["congestion"] + parts["entropy_penalty"]
    trace.append({"stage": stage, "iter": it, "phase": phase, "total": total, **parts})
    return total


def _descend(ws: _Workspace, config: SolverConfig, trace: list, stage: int,
             max_iters: int) -> bool:
    etas = np.full(ws.N + 1, config.step_size)
    value = ws.total()
    start = len(trace)
    for it in range(1, max_iters + 1):
        for k in range(1, ws.N):
            etas[k], _ = _mirror_block(ws, k, etas[k])
        new_value = _record(ws, trace, stage, start + it, "mirror")
        if value - new_value <= config.threshold(value):
            return True
        value = new_value
    return False


def _perturbation_sweep(ws: _Workspace, heat: HeatOperator, config: SolverConfig,
                        apply: bool) -> dict:
    """Heat-flow and mass-transfer probes at every interior k.

    With ``apply`` the best improving move at each k is committed as the sweep goes.
    Returns the largest gain seen for each move family and the threshold used.
    """
    threshold = config.threshold(ws.total())
    best_heat = best_transfer = 0.0
    for k in range(1, ws.N):
        heat_moves = [_heat_block(ws, heat, k, s) for s in config.s_probe if s > 0]
        h = min(heat_moves, key=lambda mv: mv[0], default=(0.0, None, None, None))
        t = _best_transfer(ws, k)
        best_heat = max(best_heat, -h[0])
        best_transfer = max(best_transfer, t[0])
        if apply:
            if -h[0] > max(t[0], threshold):
                ws.commit(k, *h[1:])
            elif t[0] > threshold:
                ws.commit(k, *t[1:])
    return {"best_heat_gain": float(best_heat), "best_transfer_gain": float(best_transfer),
            "threshold": float(threshold)}


def _use_joint(plan: TrafficPlan, params: ObjectiveParams, config: SolverConfig) -> bool:
    if config.method == "mirror":
        return False
    one_per_pair = plan.assignment == tuple(range(len(plan.boundary.pairs)))
    if config.method == "joint":
        if not (params.use_exact_w2 and one_per_pair):
            raise ValueError("the joint method needs exact W2 legs and one atom per boundary pair")
        return True
    return params.use_exact_w2 and one_per_pair


def _solve_stage(instance: Instance, plan: TrafficPlan, params: ObjectiveParams,
                 config: SolverConfig, heat: HeatOperator, trace: list, stage: int):
    ws = _Workspace(plan, params, config)
    info = {"best_heat_gain": 0.0, "best_transfer_gain": 0.0, "threshold": 0.0}
    try:
        value = _record(ws, trace, stage, 0, "init")
        if ws.N >= 2:
            if _use_joint(plan, params, config):
                from .joint import solve_joint
                sol = solve_joint(instance, params)
                candidate = plan.with_masses(np.concatenate(
                    [ws.stack[:, :1], sol.interiors, ws.stack[:, -1:]], axis=1))
                trial = _Workspace(candidate, params, config)
                if trial.total() < value:
                    ws.close()
                    ws = trial
                else:
                    trial.close()
                _record(ws, trace, stage, 1, "joint")
            else:
                _descend(ws, config, trace, stage, config.max_outer_iters)
            for _ in range(config.polish_rounds):
                before = ws.total()
                info = _perturbation_sweep(ws, heat, config, apply=True)
                after = _record(ws, trace, stage, len(trace), "perturbation")
                if before - after <= info["threshold"]:
                    break
                if not _use_joint(plan, params, config):
                    _descend(ws, config, trace, stage, max(20, config.max_outer_iters // 10))
            info = _perturbation_sweep(ws, heat, config, apply=False)
        stationary = max(info["best_heat_gain"], info["best_transfer_gain"]) <= info["threshold"]
        final = plan.with_masses(ws.stack)
        return final, ws.total(), ws.parts(), info, stationary
    finally:
        ws.close()


def _stage_params(instance: Instance, config: SolverConfig) -> list[ObjectiveParams]:
    return list(config.schedule) if config.schedule else [instance.params]


def _warm_start(instance: Instance, plan: TrafficPlan | None, params: ObjectiveParams,
                config: SolverConfig) -> TrafficPlan:
    if plan is None:
        return geodesic_plan(instance, params.N, config.init_mix)
    if plan.N == params.N:
        return plan
    from .curve_ops import resample_plan
    return resample_plan(plan, params.N)


def solve_dp(instance: Instance, config: SolverConfig | None = None) -> SolveReport:
    """Run every schedule stage (warm-started) and certify the final plan."""
    config = config or SolverConfig()
    instance.boundary.check_incompressible(1e-6)
    heat = HeatOperator(instance.grid, config.heat_substep)
    trace: list = []
    residuals: list = []
    stages: list = []
    plan = None
    info, stationary = {}, True
    for stage, params in enumerate(_stage_params(instance, config)):
        start = time.perf_counter()
        plan = _warm_start(instance, plan, params, config)
        plan, total, parts, info, stationary = _solve_stage(instance, plan, params, config,
                                                            heat, trace, stage)
        profile = entropy_profile(plan)
        residuals.append({"stage": stage, "params": params.to_dict(),
                          "incompressibility_residual": incompressibility_residual(plan)})
        stages.append({"stage": stage, "params": params.to_dict(), "objective": total,
                       "parts": parts, "entropy_profile": [float(h) for h in profile],
                       "incompressibility_residual": residuals[-1]["incompressibility_residual"],
                       "stationary": stationary})
        log.info("stage %d %s: objective %.10g (%.1fs)", stage, params.to_dict(), total,
                 time.perf_counter() - start)
    params = _stage_params(instance, config)[-1]
    cert = flow_interchange_certificate(plan, params, config.s_probe, heat=heat,
                                        tol=config.threshold(stages[-1]["objective"]),
                                        tol_convexity=config.tol_convexity)
    profile = entropy_profile(plan)
    return SolveReport(
        final_plan=plan, params=params, objective=stages[-1]["objective"],
        parts=stages[-1]["parts"], objective_trace=trace,
        entropy_profile=[float(h) for h in profile],
        convexity_residuals=[float(r) for r in convexity_residuals(profile)],
        incompressibility_trace=residuals, certificate=cert, stationarity=info,
        converged=bool(stationary), config=config, stages=stages)


# --- certificate ------------------------------------------------------------------


def flow_interchange_certificate(plan: TrafficPlan, params: ObjectiveParams,
                                 s_probe=DEFAULT_S_PROBE, heat: HeatOperator | None = None,
                                 tol: float = 1e-9, tol_convexity: float = 1e-6) -> Certificate:
    """Objective change when the heat flow acts on one interior time slice of every atom,
    plus the second differences of the averaged entropy."""
    heat = heat or HeatOperator(plan.grid)
    ws = _Workspace(plan, params, SolverConfig())
    try:
        deltas = [[_local_delta_heat(ws, heat, k, float(s)) for s in s_probe]
                  for k in range(1, ws.N)]
    finally:
        ws.close()
    residuals = convexity_residuals(entropy_profile(plan))
    return Certificate(deltas, [float(s) for s in s_probe], [float(r) for r in residuals],
                       tol, tol_convexity)


# --- brute force oracle -------------------------------------------------------------


def _w2_sq_small(x: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Vectorized squared W2 between batches of 1-D mass vectors (rows) on sorted points ``x``."""
    ca, cb = np.cumsum(a, axis=-1), np.cumsum(b, axis=-1)
    breaks = np.sort(np.concatenate([np.zeros(ca.shape[:-1] + (1,)), ca[..., :-1], cb[..., :-1],
                                     np.ones(ca.shape[:-1] + (1,))], axis=-1), axis=-1)
    lengths = np.diff(breaks, axis=-1)
    mids = 0.5 * (breaks[..., 1:] + breaks[..., :-1])
    i = np.sum(mids[..., :, None] > ca[..., None, :-1], axis=-1)
    j = np.sum(mids[..., :, None] > cb[..., None, :-1], axis=-1)
    return np.sum(lengths * (x[i] - x[j]) ** 2, axis=-1)


def _simplex_points(n: int, step: float, center=None, radius: int | None = None) -> np.ndarray:
    """Points of the probability simplex in R^n on a lattice of spacing ``step``."""
    if center is None:
        m = int(round(1 / step))
        pts = [c for c in itertools.product(range(m + 1), repeat=n - 1) if sum(c) <= m]
        pts = np.array(pts, dtype=float) * step
    else:
        offsets = np.arange(-radius, radius + 1) * step
        pts = np.array([np.asarray(center[:-1]) + np.array(o)
                        for o in itertools.product(offsets, repeat=n - 1)])
        pts = pts[np.all(pts >= -1e-12, axis=1) & (pts.sum(axis=1) <= 1 + 1e-12)]
        pts = np.clip(pts, 0, 1)
    last = np.clip(1 - pts.sum(axis=1, keepdims=True), 0, 1)
    return np.hstack([pts, last])


def _scan(instance: Instance, candidates: list[np.ndarray], params: ObjectiveParams):
    """Best combination of one candidate per atom; ties go to the most spread out (least
    averaged entropy)."""
    grid = instance.grid
    x, v = grid.centers[:, 0], grid.volumes
    tau = params.tau
    own, ent = [], []
    for (r0, r1, wm), rho in zip(instance.boundary.pairs, candidates):
        a0 = np.broadcast_to(r0.masses, rho.shape)
        a1 = np.broadcast_to(r1.masses, rho.shape)
        action = (_w2_sq_small(x, a0, rho) + _w2_sq_small(x, rho, a1)) / (2 * tau)
        h = np.sum(rho * np.log(np.where(rho > 0, rho, 1.0) / v), axis=1)
        own.append(wm * (action + params.lam * tau * h))
        ent.append(wm * h)
    w = instance.boundary.weights
    if len(candidates) == 1:
        total, avg_ent = own[0], ent[0]
        moment = w[0] * candidates[0]
    else:
        total = own[0][:, None] + own[1][None, :]
        avg_ent = ent[0][:, None] + ent[1][None, :]
        moment = w[0] * candidates[0][:, None, :] + w[1] * candidates[1][None, :, :]
    total = total + np.sum(v * (moment / v) ** params.q, axis=-1) - 1.0
    best = total.min()
    ties = np.flatnonzero(total.ravel() <= best + 1e-12)
    pick = ties[np.argmin(avg_ent.ravel()[ties])]
    idx = np.unravel_index(pick, total.shape)
    return float(total[idx]), [c[i] for c, i in zip(candidates, idx)]


def brute_force_small(instance: Instance, resolution: float = 1e-3):
    """Grid-scan oracle for tiny 1-D instances (<= 3 cells, N = 2, <= 2 atoms).

    Two cells are scanned exhaustively at ``resolution``; three cells use a
    coarse-to-fine lattice scan ending at ``resolution``. Returns (objective, plan).
    """
    params = instance.params
    grid = instance.grid
    M = len(instance.boundary.pairs)
    if grid.dim != 1 or grid.size > 3 or params.N != 2 or M > 2:
        raise ValueError("brute force needs a 1-D grid with <= 3 cells, N = 2 and <= 2 atoms")
    n = grid.size
    if n <= 2:
        pts = _simplex_points(n, resolution)
        value, best = _scan(instance, [pts] * M, params)
    else:
        step = 0.05
        value, best = _scan(instance, [_simplex_points(n, step)] * M, params)
        for step in (0.02, 0.01, 0.005, 0.002, 0.001):
            if step < resolution:
                break
            cands = [_simplex_points(n, step, center=b, radius=4) for b in best]
            value, best = _scan(instance, cands, params)
    plan = TrafficPlan.from_boundary(instance.boundary, [b[None, :] for b in best])
    return value, plan


# --- continuation ---------------------------------------------------------------------


@dataclass
class StageReport:
    params: ObjectiveParams
    objective: float
    parts: dict
    incompressibility_residual: float
    entropy_profile: list[float]
    common_times: list[float]
    common_profile: list[float]
    plan: TrafficPlan
    stationary: bool

    def to_dict(self) -> dict:
        return {"params": self.params.to_dict(), "objective": self.objective,
                "parts": self.parts,
                "incompressibility_residual": self.incompressibility_residual,
                "entropy_profile": self.entropy_profile, "common_times": self.common_times,
                "common_profile": self.common_profile, "stationary": self.stationary}


def continuation_study(instance: Instance, config: SolverConfig) -> list[StageReport]:
    """Re-solve along the schedule with warm starts and report every stage.

    Profiles are also evaluated on a common time grid (the least common multiple of
    all N) through geodesic extension, so stages with different N can be compared.
    """
    from .curve_ops import averaged_entropy_on

    schedule = _stage_params(instance, config)
    if len(schedule) < 2:
        raise ValueError("a continuation study needs at least two stages")
    common_n = int(np.lcm.reduce([p.N for p in schedule]))
    common_times = [k / common_n for k in range(common_n + 1)]
    heat = HeatOperator(instance.grid, config.heat_substep)
    reports = []
    plan = None
    trace: list = []
    for stage, params in enumerate(schedule):
        plan = _warm_start(instance, plan, params, config)
        plan, total, parts, _, stationary = _solve_stage(instance, plan, params, config, heat,
                                                         trace, stage)
        reports.append(StageReport(
            params=params, objective=total, parts=parts,
            incompressibility_residual=incompressibility_residual(plan),
            entropy_profile=[float(h) for h in entropy_profile(plan)],
            common_times=common_times,
            common_profile=[float(h) for h in averaged_entropy_on(plan, common_n)],
            plan=plan, stationary=stationary))
    return reports


__all__ = ["SolverConfig", "SolveReport", "Certificate", "StageReport", "solve_dp",
           "brute_force_small", "flow_interchange_certificate", "continuation_study",
           "geodesic_plan"]
