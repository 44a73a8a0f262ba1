"""Uniform grids on the unit interval / unit-area boxes and probability measures on them.

Densities are piecewise constant per cell, so entropy and congestion are the exact
closed forms over cell masses. A point mass ("Dirac") is a single-cell mass; its
entropy is ``ln n`` rather than infinity.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MASS_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class Grid:
    """Uniform rectangular cells on ``[0, L_1] x ... x [0, L_d]`` with unit total volume."""

    shape: tuple[int, ...]
    lengths: tuple[float, ...]
    centers: np.ndarray = field(repr=False)
    volumes: np.ndarray = field(repr=False)
    edges: np.ndarray = field(repr=False)  # (E, 2) index pairs i < j
    edge_weights: np.ndarray = field(repr=False)  # face area / center distance

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(length / n for length, n in zip(self.lengths, self.shape))

    @property
    def cell_width(self) -> float:
        return max(self.spacing)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Grid):
            return NotImplemented
        return self.shape == other.shape and self.lengths == other.lengths

    def __hash__(self) -> int:
        return hash((self.shape, self.lengths))

    def to_dict(self) -> dict:
        return {"dim": self.dim, "shape": list(self.shape), "lengths": list(self.lengths)}

    @classmethod
    def from_dict(cls, data: dict) -> "Grid":
        shape = tuple(int(n) for n in data["shape"])
        lengths = data.get("lengths")
        if "dim" in data and int(data["dim"]) != len(shape):
            raise ValueError(f"grid dim {data['dim']} does not match shape {shape}")
        if len(shape) == 1:
            return interval_grid(shape[0])
        if len(shape) == 2:
            lx = float(lengths[0]) if lengths else 1.0
            return box_grid(shape[0], shape[1], lx)
        raise ValueError(f"only 1-D and 2-D grids are supported, got shape {shape}")


def interval_grid(n: int) -> Grid:
    """``n`` equal cells on [0, 1]."""
    if n < 1:
        raise ValueError("need at least one cell")
    h = 1.0 / n
    centers = ((np.arange(n) + 0.5) * h)[:, None]
    volumes = np.full(n, h)
    edges = np.stack([np.arange(n - 1), np.arange(1, n)], axis=1).astype(np.int64)
    weights = np.full(n - 1, 1.0 / h)
    return Grid((n,), (1.0,), centers, volumes, edges.reshape(-1, 2), weights)


def box_grid(nx: int, ny: int, lx: float = 1.0) -> Grid:
    """``nx * ny`` cells on the box [0, lx] x [0, 1/lx]; cells are indexed row-major in x."""
    if nx < 1 or ny < 1:
        raise ValueError("need at least one cell per axis")
    if lx <= 0:
        raise ValueError("box side must be positive")
    ly = 1.0 / lx
    hx, hy = lx / nx, ly / ny
    ix, iy = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    centers = np.stack([(ix.ravel() + 0.5) * hx, (iy.ravel() + 0.5) * hy], axis=1)
    volumes = np.full(nx * ny, hx * hy)
    index = np.arange(nx * ny).reshape(nx, ny)
    ex = np.stack([index[:-1, :].ravel(), index[1:, :].ravel()], axis=1)
    ey = np.stack([index[:, :-1].ravel(), index[:, 1:].ravel()], axis=1)
    edges = np.concatenate([ex, ey]).astype(np.int64).reshape(-1, 2)
    weights = np.concatenate([np.full(len(ex), hy / hx), np.full(len(ey), hx / hy)])
    return Grid((nx, ny), (lx, ly), centers, volumes, edges, weights)


@dataclass(frozen=True, eq=False)
class GridMeasure:
    """A probability measure given by nonnegative cell masses."""

    grid: Grid
    masses: np.ndarray

    def __post_init__(self) -> None:
        masses = np.array(self.masses, dtype=float).reshape(-1)
        if masses.shape != (self.grid.size,):
            raise ValueError(f"expected {self.grid.size} masses, got {masses.shape[0]}")
        if not np.all(np.isfinite(masses)) or np.any(masses < 0):
            raise ValueError("masses must be finite and nonnegative")
        if abs(masses.sum() - 1.0) > MASS_TOL:
            raise ValueError(f"masses sum to {masses.sum():.16g}, not 1")
        masses.setflags(write=False)
        object.__setattr__(self, "masses", masses)

    @property
    def density(self) -> np.ndarray:
        return self.masses / self.grid.volumes

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, GridMeasure):
            return NotImplemented
        return self.grid == other.grid and np.array_equal(self.masses, other.masses)

    __hash__ = None  # type: ignore[assignment]

    def to_dict(self) -> dict:
        return {"grid": self.grid.to_dict(), "masses": [float(m) for m in self.masses]}

    @classmethod
    def from_dict(cls, data: dict) -> "GridMeasure":
        return cls(Grid.from_dict(data["grid"]), np.asarray(data["masses"], dtype=float))

    @classmethod
    def from_density(cls, grid: Grid, density) -> "GridMeasure":
        """Build from unnormalized cell densities (renormalized to unit mass)."""
        masses = np.asarray(density, dtype=float) * grid.volumes
        total = masses.sum()
        if total <= 0:
            raise ValueError("density has no mass")
        return cls(grid, masses / total)

    @classmethod
    def dirac(cls, grid: Grid, cell: int) -> "GridMeasure":
        masses = np.zeros(grid.size)
        masses[cell] = 1.0
        return cls(grid, masses)


def lebesgue(grid: Grid) -> GridMeasure:
    return GridMeasure(grid, grid.volumes.copy())


def entropy_masses(masses: np.ndarray, volumes: np.ndarray) -> np.ndarray:
    """Sum of m ln(m/v) over the last axis with 0 ln 0 = 0 (vectorized helper)."""
    masses = np.asarray(masses, dtype=float)
    ratio = np.where(masses > 0, masses / volumes, 1.0)
    return np.sum(masses * np.log(ratio), axis=-1)


def entropy(mu: GridMeasure) -> float:
    """Entropy relative to the normalized Lebesgue measure; finite and >= 0 on grids."""
    return float(entropy_masses(mu.masses, mu.grid.volumes))


def congestion_masses(masses: np.ndarray, volumes: np.ndarray, q: float) -> np.ndarray:
    return np.sum(volumes * (np.asarray(masses) / volumes) ** q, axis=-1) - 1.0


def congestion(mu: GridMeasure, q: float) -> float:
    """Integral of density**q minus one; zero exactly at Lebesgue."""
    if not q > 1:
        raise ValueError(f"congestion exponent must exceed 1, got {q}")
    return float(congestion_masses(mu.masses, mu.grid.volumes, q))


def lq_norm(mu: GridMeasure, q: float) -> float:
    return float(np.sum(mu.grid.volumes * mu.density**q) ** (1.0 / q))


def l1_distance(mu: GridMeasure, nu: GridMeasure) -> float:
    if mu.grid != nu.grid:
        raise ValueError("measures live on different grids")
    return float(np.sum(np.abs(mu.masses - nu.masses)))


def mix(measures, weights) -> GridMeasure:
    """Convex combination of measures on one grid."""
    measures = list(measures)
    weights = np.asarray(weights, dtype=float)
    grid = measures[0].grid
    if any(m.grid != grid for m in measures):
        raise ValueError("measures live on different grids")
    masses = np.einsum("m,mi->i", weights, np.stack([m.masses for m in measures]))
    return GridMeasure(grid, masses / masses.sum())


def random_measure(grid: Grid, rng: np.random.Generator, smoothness: float = 0.0,
                   floor: float = 0.0) -> GridMeasure:
    """Random positive measure; ``smoothness > 0`` blurs i.i.d. cell weights over that many cells.

    ``floor`` mixes in that fraction of Lebesgue.
    """
    weights = rng.exponential(size=grid.size)
    if smoothness > 0:
        w = weights.reshape(grid.shape)
        for axis in range(grid.dim):
            n = grid.shape[axis]
            idx = np.arange(n)
            kernel = np.exp(-0.5 * ((idx[:, None] - idx[None, :]) / smoothness) ** 2)
            kernel /= kernel.sum(axis=1, keepdims=True)
            w = np.moveaxis(np.tensordot(kernel, np.moveaxis(w, axis, 0), axes=1), 0, axis)
        weights = w.ravel()
    masses = weights / weights.sum()
    masses = (1 - floor) * masses + floor * grid.volumes
    return GridMeasure(grid, masses / masses.sum())
