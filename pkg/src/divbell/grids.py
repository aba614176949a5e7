"""Rectangular grids and complex grid functions.

Unknowns live on lattice vertices.  With n cells per axis on [lo, hi] and
spacing h = (hi - lo)/n, a periodic axis carries n unknowns at lo + i*h and
a Dirichlet axis carries the n - 1 interior vertices (the boundary value is
pinned to zero).  Faces are the lattice edges; axis-a faces on a Dirichlet
axis run over all n edges of that axis but only over interior transverse
lines, since edges lying inside the boundary hyperplane carry identically
zero differences.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import DomainError


class Boundary(enum.Enum):
    DIRICHLET = "dirichlet"
    PERIODIC = "periodic"


@dataclass(frozen=True)
class Grid:
    cells: tuple[int, ...]
    lo: tuple[float, ...]
    hi: tuple[float, ...]
    boundary: Boundary = Boundary.DIRICHLET

    def __post_init__(self):
        if not 1 <= len(self.cells) <= 3:
            raise DomainError(f"grid dimension must be 1, 2 or 3, got {len(self.cells)}")
        if len(self.lo) != len(self.cells) or len(self.hi) != len(self.cells):
            raise DomainError("extent tuples must match the grid dimension")
        for n, a, b in zip(self.cells, self.lo, self.hi):
            if n < 2:
                raise DomainError(f"need at least 2 cells per axis, got {n}")
            if not b > a:
                raise DomainError(f"empty extent [{a}, {b}]")
        object.__setattr__(self, "cells", tuple(int(n) for n in self.cells))
        object.__setattr__(self, "lo", tuple(float(a) for a in self.lo))
        object.__setattr__(self, "hi", tuple(float(b) for b in self.hi))

    @property
    def dim(self) -> int:
        return len(self.cells)

    @property
    def periodic(self) -> bool:
        return self.boundary is Boundary.PERIODIC

    @cached_property
    def spacing(self) -> tuple[float, ...]:
        return tuple((b - a) / n for n, a, b in zip(self.cells, self.lo, self.hi))

    @cached_property
    def node_shape(self) -> tuple[int, ...]:
        if self.periodic:
            return self.cells
        return tuple(n - 1 for n in self.cells)

    @cached_property
    def vertex_shape(self) -> tuple[int, ...]:
        """Lattice points carrying coefficient samples (includes the boundary
        ring on Dirichlet grids)."""
        if self.periodic:
            return self.cells
        return tuple(n + 1 for n in self.cells)

    @property
    def n_nodes(self) -> int:
        return int(np.prod(self.node_shape))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def face_shape(self, axis: int) -> tuple[int, ...]:
        if self.periodic:
            return self.cells
        return tuple(n if a == axis else n - 1 for a, n in enumerate(self.cells))

    def n_faces(self, axis: int) -> int:
        return int(np.prod(self.face_shape(axis)))

    def axis_nodes(self, axis: int) -> np.ndarray:
        h = self.spacing[axis]
        if self.periodic:
            return self.lo[axis] + h * np.arange(self.cells[axis])
        return self.lo[axis] + h * np.arange(1, self.cells[axis])

    def axis_vertices(self, axis: int) -> np.ndarray:
        h = self.spacing[axis]
        if self.periodic:
            return self.lo[axis] + h * np.arange(self.cells[axis])
        return self.lo[axis] + h * np.arange(self.cells[axis] + 1)

    def node_coords(self) -> list[np.ndarray]:
        """Per-axis coordinate arrays broadcast to node_shape."""
        axes = [self.axis_nodes(a) for a in range(self.dim)]
        return list(np.meshgrid(*axes, indexing="ij"))

    def vertex_coords(self) -> list[np.ndarray]:
        axes = [self.axis_vertices(a) for a in range(self.dim)]
        return list(np.meshgrid(*axes, indexing="ij"))

    def face_midpoints(self, axis: int) -> list[np.ndarray]:
        """Coordinates of axis-a face midpoints, broadcast to face_shape."""
        h = self.spacing[axis]
        per_axis = []
        for a in range(self.dim):
            if a == axis:
                per_axis.append(self.lo[a] + h * (np.arange(self.cells[a]) + 0.5))
            elif self.periodic:
                per_axis.append(self.axis_nodes(a))
            else:
                per_axis.append(self.axis_nodes(a))
        return list(np.meshgrid(*per_axis, indexing="ij"))


@dataclass
class GridFunction:
    """Complex scalar field on the grid nodes."""

    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.complex128)
        if vals.shape == (self.grid.n_nodes,):
            vals = vals.reshape(self.grid.node_shape)
        if vals.shape != self.grid.node_shape:
            raise DomainError(
                f"values shape {vals.shape} does not match node shape {self.grid.node_shape}")
        self.values = vals

    @classmethod
    def zeros(cls, grid: Grid) -> "GridFunction":
        return cls(grid, np.zeros(grid.node_shape, dtype=np.complex128))

    @classmethod
    def from_function(cls, grid: Grid, fn) -> "GridFunction":
        return cls(grid, np.asarray(fn(*grid.node_coords()), dtype=np.complex128))

    @property
    def flat(self) -> np.ndarray:
        return self.values.ravel()

    def copy(self) -> "GridFunction":
        return GridFunction(self.grid, self.values.copy())

    def norm(self, p: float = 2.0) -> float:
        """L^p norm with cell-volume weights h^dim."""
        w = self.grid.cell_volume
        a = np.abs(self.flat)
        if np.isinf(p):
            return float(a.max(initial=0.0))
        return float((w * np.sum(a ** p)) ** (1.0 / p))

    def norm_inf(self) -> float:
        return self.norm(np.inf)
