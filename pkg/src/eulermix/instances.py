"""Problem instances (grid + boundary coupling + objective parameters), their JSON
format, and the bundled generators used by tests and scripts."""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import jsonschema
import numpy as np

from .grid import Grid, GridMeasure, interval_grid, lebesgue
from .traffic_plan import BoundaryCoupling, ObjectiveParams
from .transport import uniform_on

_GRID_SCHEMA = {
    "type": "object",
    "required": ["shape"],
    "properties": {
        "dim": {"enum": [1, 2]},
        "shape": {"type": "array", "items": {"type": "integer", "minimum": 1},
                  "minItems": 1, "maxItems": 2},
        "lengths": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
    },
}

_PARAMS_SCHEMA = {
    "type": "object",
    "required": ["N"],
    "properties": {
        "N": {"type": "integer", "minimum": 1},
        "q": {"type": "number", "exclusiveMinimum": 1},
        "lambda": {"type": "number", "minimum": 0},
        "epsilon": {"type": "number", "exclusiveMinimum": 0},
        "use_exact_w2": {"type": "boolean"},
    },
}

INSTANCE_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "eulermix instance",
    "type": "object",
    "required": ["grid", "boundary", "params"],
    "properties": {
        "name": {"type": "string"},
        "grid": _GRID_SCHEMA,
        "boundary": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["rho0", "rho1", "weight"],
                "properties": {
                    "rho0": {"type": "array", "items": {"type": "number", "minimum": 0}},
                    "rho1": {"type": "array", "items": {"type": "number", "minimum": 0}},
                    "weight": {"type": "number", "exclusiveMinimum": 0},
                },
            },
        },
        "params": _PARAMS_SCHEMA,
    },
}

MEASURE_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "eulermix grid measure",
    "type": "object",
    "required": ["grid", "masses"],
    "properties": {
        "grid": _GRID_SCHEMA,
        "masses": {"type": "array", "items": {"type": "number", "minimum": 0}},
    },
}


@dataclass(frozen=True, eq=False)
class Instance:
    grid: Grid
    boundary: BoundaryCoupling
    params: ObjectiveParams
    name: str = "instance"

    def with_params(self, **changes) -> "Instance":
        return replace(self, params=replace(self.params, **changes))

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "grid": self.grid.to_dict(),
            "boundary": [{"rho0": [float(x) for x in r0.masses],
                          "rho1": [float(x) for x in r1.masses], "weight": w}
                         for r0, r1, w in self.boundary.pairs],
            "params": self.params.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Instance":
        jsonschema.validate(data, INSTANCE_SCHEMA)
        grid = Grid.from_dict(data["grid"])
        pairs = tuple((GridMeasure(grid, p["rho0"]), GridMeasure(grid, p["rho1"]), p["weight"])
                      for p in data["boundary"])
        return cls(grid, BoundaryCoupling(pairs), ObjectiveParams.from_dict(data["params"]),
                   data.get("name", "instance"))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "Instance":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _coupling(grid: Grid, measures_and_weights) -> BoundaryCoupling:
    return BoundaryCoupling(tuple(measures_and_weights))


def diagonal_leb(n: int = 8, N: int = 2, **params) -> Instance:
    """Every phase starts and ends at Lebesgue; the optimum is the constant plan."""
    grid = interval_grid(n)
    leb = lebesgue(grid)
    return Instance(grid, _coupling(grid, [(leb, leb, 1.0)]), ObjectiveParams(N=N, **params),
                    "diagonal-leb")


def swap(n: int = 2, N: int = 2, **params) -> Instance:
    """Two phases exchanging the left and right parts of a 2- or 3-cell interval."""
    grid = interval_grid(n)
    if n == 2:
        left, right = GridMeasure.dirac(grid, 0), GridMeasure.dirac(grid, 1)
    elif n == 3:
        left = GridMeasure(grid, [2 / 3, 1 / 3, 0.0])
        right = GridMeasure(grid, [0.0, 1 / 3, 2 / 3])
    else:
        raise ValueError("swap instances use 2 or 3 cells")
    return Instance(grid, _coupling(grid, [(left, right, 0.5), (right, left, 0.5)]),
                    ObjectiveParams(N=N, **params), f"swap-{n}")


def mirrored_halves(n: int = 32, N: int = 2, **params) -> Instance:
    """Uniform on the left half moves to the right half and vice versa."""
    if n % 2:
        raise ValueError("mirrored halves needs an even number of cells")
    grid = interval_grid(n)
    left, right = uniform_on(grid, range(n // 2)), uniform_on(grid, range(n // 2, n))
    return Instance(grid, _coupling(grid, [(left, right, 0.5), (right, left, 0.5)]),
                    ObjectiveParams(N=N, **params), f"mirrored-halves-{n}")


def scale_to_lebesgue(profiles: np.ndarray, weights: np.ndarray, volumes: np.ndarray,
                      tol: float = 1e-15, max_iter: int = 100000) -> np.ndarray:
    """Rescale positive profiles (atoms x cells) so each row is a probability vector and the
    weighted average of the rows is Lebesgue (alternating matrix scaling)."""
    P = np.asarray(profiles, dtype=float) * weights[:, None]
    for _ in range(max_iter):
        P *= (volumes / P.sum(axis=0))[None, :]
        P *= (weights / P.sum(axis=1))[:, None]
        if np.abs(P.sum(axis=0) - volumes).max() < tol:
            break
    rows = P / weights[:, None]
    return rows / rows.sum(axis=1, keepdims=True)


def random_coupling(grid: Grid, n_atoms: int, rng: np.random.Generator,
                    width: float = 0.15, floor: float = 0.05) -> BoundaryCoupling:
    """Random incompressible coupling of bump-shaped phases (1-D or 2-D grids)."""
    weights = rng.dirichlet(np.full(n_atoms, 4.0))
    ends = []
    for _ in range(2):
        centers = rng.uniform(0, 1, size=(n_atoms, grid.dim)) * np.array(grid.lengths)
        d2 = np.sum((grid.centers[None, :, :] - centers[:, None, :]) ** 2, axis=-1)
        profiles = np.exp(-0.5 * d2 / width**2) + floor
        ends.append(scale_to_lebesgue(profiles, weights, grid.volumes))
    pairs = tuple((GridMeasure(grid, ends[0][m]), GridMeasure(grid, ends[1][m]), float(w))
                  for m, w in enumerate(weights))
    return BoundaryCoupling(pairs)


def random_instance(n: int, N: int, n_atoms: int = 3, seed: int = 0, **params) -> Instance:
    grid = interval_grid(n)
    boundary = random_coupling(grid, n_atoms, np.random.default_rng(seed))
    return Instance(grid, boundary, ObjectiveParams(N=N, **params), f"random-{n}-{N}-{seed}")
