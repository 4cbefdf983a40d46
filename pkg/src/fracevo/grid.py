"""Uniform time grids and sampled trajectories."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t_i = i T / N`` on ``[0, T]``."""

    T: float
    N: int

    def __post_init__(self):
        if not (np.isfinite(self.T) and self.T > 0):
            raise ValueError(f"grid length T must be positive, got {self.T!r}")
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"grid size N must be a positive integer, got {self.N!r}")
        object.__setattr__(self, "T", float(self.T))
        object.__setattr__(self, "N", int(self.N))

    @property
    def h(self) -> float:
        return self.T / self.N

    @property
    def nodes(self) -> np.ndarray:
        return self.T * np.arange(self.N + 1) / self.N

    def refined(self, factor: int = 2) -> "TimeGrid":
        return TimeGrid(self.T, self.N * factor)


@dataclass
class Trajectory:
    """Samples of a vector-, matrix- or scalar-valued function on a grid.

    ``values[i]`` is the sample at ``grid.nodes[i]``. ``info`` carries solver
    diagnostics (series lengths, certified remainders, ...).
    """

    grid: TimeGrid
    values: np.ndarray
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape[0] != self.grid.N + 1:
            raise ValueError(
                f"trajectory has {self.values.shape[0]} samples, grid has {self.grid.N + 1} nodes")
        if not np.all(np.isfinite(self.values)):
            raise FloatingPointError("trajectory contains non-finite values")

    @property
    def t(self) -> np.ndarray:
        return self.grid.nodes

    def apply(self, v) -> "Trajectory":
        """Apply an operator-valued trajectory to a fixed vector."""
        return Trajectory(self.grid, self.values @ np.asarray(v, dtype=float))

    def sup_norm(self) -> float:
        """Max over nodes of the 2-norm (vectors) or spectral norm (matrices)."""
        v = self.values
        if v.ndim == 1:
            return float(np.max(np.abs(v)))
        if v.ndim == 2:
            return float(np.max(np.linalg.norm(v, axis=1)))
        return float(np.max(np.linalg.norm(v, ord=2, axis=(1, 2))))

    def __sub__(self, other: "Trajectory") -> "Trajectory":
        return Trajectory(self.grid, self.values - other.values)
