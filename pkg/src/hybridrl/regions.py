"""Grid-backed state-space regions with exact cell-wise set algebra."""

from __future__ import annotations

import math
from collections import deque
from collections.abc import Callable, Iterable, Iterator
from dataclasses import dataclass
from typing import Any, Protocol

import numpy as np

from .exceptions import HybridRLError
from .models import BoolArray, FloatArray, GridPayload, IntArray, RegionPayload

REGION_FORMAT = "hybridrl.region"
REGION_VERSION = 1


class GridMismatchError(HybridRLError, ValueError):
    """Raised when combining regions defined on different grids."""


class Grid(Protocol):
    """Common interface of the angular and box grids."""

    @property
    def kind(self) -> str: ...

    @property
    def n_cells(self) -> int: ...

    @property
    def resolution(self) -> float: ...

    def cell_of(self, states: FloatArray) -> IntArray: ...

    def centers(self) -> FloatArray: ...

    def neighbors(self, cell: int) -> list[int]: ...

    def dilate(self, mask: BoolArray) -> BoolArray: ...

    def runs(self, mask: BoolArray) -> list[int]: ...

    def runs_through(self, mask: BoolArray, through: BoolArray) -> list[int]: ...

    def describe(self, mask: BoolArray) -> str: ...

    def to_payload(self) -> GridPayload: ...


def _linear_runs(values: BoolArray) -> list[int]:
    padded = np.concatenate([[False], values, [False]]).astype(np.int8)
    edges = np.flatnonzero(np.diff(padded))
    return [int(end - start) for start, end in zip(edges[::2], edges[1::2])]


def _linear_runs_through(values: BoolArray, through: BoolArray) -> list[int]:
    """Lengths of the runs of ``values`` that meet ``through``; 0 if ``through`` sticks out."""

    padded = np.concatenate([[False], values, [False]]).astype(np.int8)
    edges = np.flatnonzero(np.diff(padded))
    lengths = [
        int(end - start)
        for start, end in zip(edges[::2], edges[1::2])
        if through[start:end].any()
    ]
    if (through & ~values).any():
        lengths.append(0)
    return lengths


@dataclass(frozen=True, slots=True)
class AngularGrid:
    """Uniform partition of the unit circle into ``n_cells`` arcs, cell 0 starting at angle 0."""

    n_cells: int

    @property
    def kind(self) -> str:
        return "angular"

    @property
    def resolution(self) -> float:
        return 2.0 * math.pi / self.n_cells

    def cell_of(self, states: FloatArray) -> IntArray:
        angles = np.mod(np.arctan2(states[..., 1], states[..., 0]), 2.0 * np.pi)
        return np.floor(angles / self.resolution).astype(np.int64) % self.n_cells  # type: ignore[no-any-return]

    def cell_of_angle(self, angles: FloatArray | float) -> IntArray:
        """Cell index containing each angle."""

        wrapped = np.mod(angles, 2.0 * np.pi)
        return np.floor(wrapped / self.resolution).astype(np.int64) % self.n_cells  # type: ignore[no-any-return]

    def center_angles(self) -> FloatArray:
        """Angle at the middle of each arc."""

        return (np.arange(self.n_cells) + 0.5) * self.resolution  # type: ignore[no-any-return]

    def centers(self) -> FloatArray:
        angles = self.center_angles()
        return np.stack([np.cos(angles), np.sin(angles)], axis=1)  # type: ignore[no-any-return]

    def neighbors(self, cell: int) -> list[int]:
        return [(cell - 1) % self.n_cells, (cell + 1) % self.n_cells]

    def dilate(self, mask: BoolArray) -> BoolArray:
        return mask | np.roll(mask, 1) | np.roll(mask, -1)  # type: ignore[no-any-return]

    def runs(self, mask: BoolArray) -> list[int]:
        if mask.all():
            return [self.n_cells]
        start = int(np.flatnonzero(~mask)[0])
        return _linear_runs(np.roll(mask, -start))

    def runs_through(self, mask: BoolArray, through: BoolArray) -> list[int]:
        if not through.any():
            return []
        if mask.all():
            return [self.n_cells]
        start = int(np.flatnonzero(~mask)[0])
        return _linear_runs_through(np.roll(mask, -start), np.roll(through, -start))

    def intervals(self, mask: BoolArray) -> list[tuple[float, float]]:
        """Arcs covered by ``mask`` as ``(start, end)`` angles; ``end`` may exceed ``2*pi``."""

        if mask.all():
            return [(0.0, 2.0 * math.pi)]
        start = int(np.flatnonzero(~mask)[0])
        rolled = np.roll(mask, -start)
        padded = np.concatenate([[False], rolled, [False]]).astype(np.int8)
        edges = np.flatnonzero(np.diff(padded))
        arcs = []
        for lo, hi in zip(edges[::2], edges[1::2]):
            first = (int(lo) + start) % self.n_cells
            arcs.append((first * self.resolution, (first + int(hi - lo)) * self.resolution))
        return sorted(arcs)

    def describe(self, mask: BoolArray) -> str:
        arcs = self.intervals(mask)
        if not arcs:
            return "empty"
        return " U ".join(f"[{lo / math.pi:.3f}pi, {hi / math.pi:.3f}pi]" for lo, hi in arcs)

    def to_payload(self) -> GridPayload:
        return {"kind": self.kind, "n_cells": self.n_cells, "resolution": self.resolution}


@dataclass(frozen=True, slots=True)
class BoxGrid:
    """Square cells of side ``resolution`` over an axis-aligned box.

    Cells are indexed column-major in x: ``cell = ix * ny + iy``.
    """

    x_bounds: tuple[float, float]
    y_bounds: tuple[float, float]
    cell_size: float

    @property
    def kind(self) -> str:
        return "box"

    @property
    def resolution(self) -> float:
        return self.cell_size

    @property
    def nx(self) -> int:
        return max(1, round((self.x_bounds[1] - self.x_bounds[0]) / self.cell_size))

    @property
    def ny(self) -> int:
        return max(1, round((self.y_bounds[1] - self.y_bounds[0]) / self.cell_size))

    @property
    def n_cells(self) -> int:
        return self.nx * self.ny

    def cell_of(self, states: FloatArray) -> IntArray:
        ix = np.floor((states[..., 0] - self.x_bounds[0]) / self.cell_size).astype(np.int64)
        iy = np.floor((states[..., 1] - self.y_bounds[0]) / self.cell_size).astype(np.int64)
        ix = np.clip(ix, 0, self.nx - 1)
        iy = np.clip(iy, 0, self.ny - 1)
        return ix * self.ny + iy  # type: ignore[no-any-return]

    def centers(self) -> FloatArray:
        xs = self.x_bounds[0] + (np.arange(self.nx) + 0.5) * self.cell_size
        ys = self.y_bounds[0] + (np.arange(self.ny) + 0.5) * self.cell_size
        gx, gy = np.meshgrid(xs, ys, indexing="ij")
        return np.stack([gx.ravel(), gy.ravel()], axis=1)  # type: ignore[no-any-return]

    def neighbors(self, cell: int) -> list[int]:
        ix, iy = divmod(cell, self.ny)
        result = []
        for dx, dy in ((-1, 0), (1, 0), (0, -1), (0, 1)):
            jx, jy = ix + dx, iy + dy
            if 0 <= jx < self.nx and 0 <= jy < self.ny:
                result.append(jx * self.ny + jy)
        return result

    def dilate(self, mask: BoolArray) -> BoolArray:
        grid = mask.reshape(self.nx, self.ny)
        out = grid.copy()
        out[1:, :] |= grid[:-1, :]
        out[:-1, :] |= grid[1:, :]
        out[:, 1:] |= grid[:, :-1]
        out[:, :-1] |= grid[:, 1:]
        return out.ravel()

    def runs(self, mask: BoolArray) -> list[int]:
        columns = mask.reshape(self.nx, self.ny)
        return [length for column in columns for length in _linear_runs(column)]

    def runs_through(self, mask: BoolArray, through: BoolArray) -> list[int]:
        columns = mask.reshape(self.nx, self.ny)
        crossing = through.reshape(self.nx, self.ny)
        return [
            length
            for column, marks in zip(columns, crossing)
            if marks.any()
            for length in _linear_runs_through(column, marks)
        ]

    def describe(self, mask: BoolArray) -> str:
        if not mask.any():
            return "empty"
        members = self.centers()[mask]
        half = self.cell_size / 2.0
        return (
            f"{int(mask.sum())}/{self.n_cells} cells, "
            f"x in [{members[:, 0].min() - half:.3f}, {members[:, 0].max() + half:.3f}], "
            f"y in [{members[:, 1].min() - half:.3f}, {members[:, 1].max() + half:.3f}]"
        )

    def to_payload(self) -> GridPayload:
        return {
            "kind": self.kind,
            "x_bounds": list(self.x_bounds),
            "y_bounds": list(self.y_bounds),
            "resolution": self.cell_size,
        }


def grid_from_payload(payload: GridPayload) -> Grid:
    """Rebuild a grid from its header."""

    if payload["kind"] == "angular":
        return AngularGrid(int(payload["n_cells"]))
    x_bounds = payload["x_bounds"]
    y_bounds = payload["y_bounds"]
    return BoxGrid(
        (float(x_bounds[0]), float(x_bounds[1])),
        (float(y_bounds[0]), float(y_bounds[1])),
        float(payload["resolution"]),
    )


def encode_labels(mask: BoolArray) -> list[list[int]]:
    """Run-length encode a membership mask as ``[value, count]`` pairs."""

    if mask.size == 0:
        return []
    values = mask.astype(np.int8)
    change = np.flatnonzero(np.diff(values)) + 1
    starts = np.concatenate([[0], change])
    ends = np.concatenate([change, [values.size]])
    return [[int(values[s]), int(e - s)] for s, e in zip(starts, ends)]


def decode_labels(labels: Iterable[Iterable[int]], n_cells: int) -> BoolArray:
    """Inverse of :func:`encode_labels`.

    Raises:
        ValueError: If the runs do not add up to ``n_cells``
    """
    pieces = [np.full(int(count), bool(value)) for value, count in labels]
    mask = np.concatenate(pieces) if pieces else np.zeros(0, dtype=bool)
    if mask.size != n_cells:
        raise ValueError(f"Labels cover {mask.size} cells, grid has {n_cells}")
    return mask


class Region:
    """A set of grid cells; a state belongs to the region when its cell does."""

    def __init__(self, grid: Grid, mask: BoolArray, name: str = "region") -> None:
        array = np.array(mask, dtype=bool)
        if array.shape != (grid.n_cells,):
            raise ValueError(f"Mask shape {array.shape} does not match {grid.n_cells} cells")
        self.grid = grid
        self.mask = array
        self.mask.flags.writeable = False
        self.name = name

    @classmethod
    def from_predicate(
        cls, grid: Grid, predicate: Callable[[FloatArray], BoolArray], name: str = "region"
    ) -> Region:
        """Region of the cells whose centers satisfy ``predicate``."""

        return cls(grid, np.asarray(predicate(grid.centers()), dtype=bool), name)

    @classmethod
    def from_cells(cls, grid: Grid, cells: Iterable[int], name: str = "region") -> Region:
        """Region made of the given cell indices."""

        mask = np.zeros(grid.n_cells, dtype=bool)
        mask[list(cells)] = True
        return cls(grid, mask, name)

    @classmethod
    def full(cls, grid: Grid, name: str = "S") -> Region:
        """The whole constraint set."""

        return cls(grid, np.ones(grid.n_cells, dtype=bool), name)

    @classmethod
    def empty(cls, grid: Grid, name: str = "empty") -> Region:
        """The empty region."""

        return cls(grid, np.zeros(grid.n_cells, dtype=bool), name)

    def renamed(self, name: str) -> Region:
        return Region(self.grid, self.mask, name)

    # Membership
    def contains(self, xi: FloatArray) -> bool:
        """Whether a single state lies in the region."""

        return bool(self.mask[int(self.grid.cell_of(np.asarray(xi)[None, :])[0])])

    def contains_many(self, states: FloatArray) -> BoolArray:
        """Vectorized membership for states of shape ``(N, 2)``."""

        return self.mask[self.grid.cell_of(states)]  # type: ignore[no-any-return]

    def __contains__(self, xi: object) -> bool:
        return self.contains(np.asarray(xi, dtype=np.float64))

    @property
    def cells(self) -> IntArray:
        return np.flatnonzero(self.mask)

    @property
    def size(self) -> int:
        return int(self.mask.sum())

    @property
    def is_empty(self) -> bool:
        return not bool(self.mask.any())

    def centers(self) -> FloatArray:
        """Centers of the member cells."""

        return self.grid.centers()[self.mask]

    # Algebra
    def _check(self, other: Region) -> None:
        if self.grid != other.grid:
            raise GridMismatchError(f"Regions {self.name!r} and {other.name!r} use different grids")

    def union(self, other: Region, name: str | None = None) -> Region:
        self._check(other)
        return Region(self.grid, self.mask | other.mask, name or f"{self.name}|{other.name}")

    def intersection(self, other: Region, name: str | None = None) -> Region:
        self._check(other)
        return Region(self.grid, self.mask & other.mask, name or f"{self.name}&{other.name}")

    def difference(self, other: Region, name: str | None = None) -> Region:
        self._check(other)
        return Region(self.grid, self.mask & ~other.mask, name or f"{self.name}-{other.name}")

    def complement(self, name: str | None = None) -> Region:
        return Region(self.grid, ~self.mask, name or f"~{self.name}")

    __or__ = union
    __and__ = intersection
    __sub__ = difference
    __invert__ = complement

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Region):
            return NotImplemented
        return self.grid == other.grid and bool(np.array_equal(self.mask, other.mask))

    def __hash__(self) -> int:
        return hash((self.grid, self.mask.tobytes()))

    def issubset(self, other: Region) -> bool:
        self._check(other)
        return not bool((self.mask & ~other.mask).any())

    # Topology
    def dilate(self, rings: int = 1) -> Region:
        """Add ``rings`` layers of neighboring cells."""

        mask = self.mask
        for _ in range(rings):
            mask = self.grid.dilate(mask)
        return Region(self.grid, mask, f"{self.name}+{rings}")

    def boundary_band(self) -> Region:
        """Member cells adjacent to a non-member cell."""

        outside = self.grid.dilate(~self.mask)
        return Region(self.grid, self.mask & outside, f"boundary({self.name})")

    def closure(self) -> Region:
        """The region plus its adjacent cells."""

        return self.dilate(1).renamed(f"closure({self.name})")

    def components(self) -> list[Region]:
        """Connected components under grid adjacency, ordered by lowest cell index."""

        seen = np.zeros_like(self.mask)
        parts: list[Region] = []
        for start in self.cells:
            if seen[start]:
                continue
            members = []
            queue = deque([int(start)])
            seen[start] = True
            while queue:
                cell = queue.popleft()
                members.append(cell)
                for neighbor in self.grid.neighbors(cell):
                    if self.mask[neighbor] and not seen[neighbor]:
                        seen[neighbor] = True
                        queue.append(neighbor)
            parts.append(Region.from_cells(self.grid, members, f"{self.name}[{len(parts)}]"))
        return parts

    def transversal_width(self, across: Region | None = None) -> float:
        """Minimal thickness across the region, in cells times the grid resolution.

        Measured along the circle for angular grids and along each x-column for box grids.
        With ``across``, only the runs meeting its cells count, and a line on which one of its
        cells lies outside the region has width zero. Zero when empty.
        """
        if across is None:
            runs = self.grid.runs(self.mask)
        else:
            self._check(across)
            runs = self.grid.runs_through(self.mask, across.mask)
        if not runs:
            return 0.0
        return min(runs) * self.grid.resolution

    def summary(self) -> str:
        """Human-readable description (interval notation on the circle)."""

        return f"{self.name}: {self.grid.describe(self.mask)}"

    def to_payload(self, metadata: dict[str, Any] | None = None) -> RegionPayload:
        payload: RegionPayload = {
            "format": REGION_FORMAT,
            "version": REGION_VERSION,
            "name": self.name,
            "grid": self.grid.to_payload(),
            "labels": encode_labels(self.mask),
            "summary": self.summary(),
        }
        if metadata is not None:
            payload["metadata"] = metadata
        return payload

    def __iter__(self) -> Iterator[int]:
        return iter(int(cell) for cell in self.cells)

    def __repr__(self) -> str:
        return f"Region({self.summary()})"
