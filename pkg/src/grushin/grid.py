"""Rectangular lattices over boxes and scalar fields sampled on them."""
from __future__ import annotations

import csv
import io
import itertools
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = ["Grid", "GridFunction", "format_float"]


def format_float(x: float) -> str:
    """17 significant digits; infinities as ``inf``/``-inf``."""
    x = float(x)
    if np.isposinf(x):
        return "inf"
    if np.isneginf(x):
        return "-inf"
    return f"{x:.17g}"


@dataclass(frozen=True)
class Grid:
    """Tensor-product lattice with ``counts[i]`` nodes on ``[lower[i], upper[i]]``.

    Nodes are addressed by integer multi-indices; flat ordering is C order.
    """

    lower: tuple
    upper: tuple
    counts: tuple

    def __post_init__(self):
        lower = tuple(float(v) for v in np.atleast_1d(self.lower))
        upper = tuple(float(v) for v in np.atleast_1d(self.upper))
        counts = tuple(int(c) for c in np.atleast_1d(self.counts))
        if not (len(lower) == len(upper) == len(counts)):
            raise ValueError("lower, upper and counts must have the same length")
        if any(c < 3 for c in counts):
            raise ValueError(f"every axis needs at least 3 nodes, got {counts}")
        if any(lo >= hi for lo, hi in zip(lower, upper)):
            raise ValueError("need lower < upper on every axis")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "counts", counts)

    @classmethod
    def centered(cls, center, spacing, radius: int) -> "Grid":
        """Small grid of ``2*radius + 1`` nodes per axis centred on a point."""
        center = np.atleast_1d(np.asarray(center, dtype=float))
        spacing = np.broadcast_to(np.asarray(spacing, dtype=float), center.shape)
        return cls(tuple(center - radius * spacing), tuple(center + radius * spacing),
                   (2 * radius + 1,) * center.size)

    @property
    def ndim(self) -> int:
        return len(self.counts)

    @property
    def spacing(self) -> np.ndarray:
        return np.array([(hi - lo) / (c - 1) for lo, hi, c in zip(self.lower, self.upper, self.counts)])

    @property
    def shape(self) -> tuple:
        return self.counts

    @property
    def size(self) -> int:
        return int(np.prod(self.counts))

    def axes(self) -> list[np.ndarray]:
        return [np.linspace(lo, hi, c) for lo, hi, c in zip(self.lower, self.upper, self.counts)]

    def coordinates(self) -> np.ndarray:
        """Node coordinates, shape ``counts + (n,)``."""
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)

    def point(self, index) -> np.ndarray:
        index = tuple(int(i) for i in index)
        self._check_index(index)
        h = self.spacing
        return np.array([lo + i * hi for lo, i, hi in zip(self.lower, index, h)])

    def nearest_index(self, x) -> tuple:
        x = np.asarray(x, dtype=float)
        idx = np.rint((x - np.array(self.lower)) / self.spacing).astype(int)
        return tuple(int(np.clip(i, 0, c - 1)) for i, c in zip(idx, self.counts))

    def _check_index(self, index):
        if len(index) != self.ndim:
            raise ValueError(f"index {index} has wrong length for a {self.ndim}-D grid")
        for i, c in zip(index, self.counts):
            if not 0 <= i < c:
                raise IndexError(f"index {index} outside grid with counts {self.counts}")

    def margin(self, index) -> int:
        """Number of nodes between ``index`` and the nearest face."""
        self._check_index(tuple(index))
        return min(min(i, c - 1 - i) for i, c in zip(index, self.counts))

    def is_boundary(self, index) -> bool:
        return self.margin(index) == 0

    def boundary_mask(self) -> np.ndarray:
        mask = np.zeros(self.counts, dtype=bool)
        for ax in range(self.ndim):
            sl = [slice(None)] * self.ndim
            sl[ax] = 0
            mask[tuple(sl)] = True
            sl[ax] = -1
            mask[tuple(sl)] = True
        return mask

    def interior_mask(self) -> np.ndarray:
        return ~self.boundary_mask()

    def indices(self):
        return itertools.product(*(range(c) for c in self.counts))

    def refine(self) -> "Grid":
        """Halve the spacing; every old node remains a node."""
        return Grid(self.lower, self.upper, tuple(2 * c - 1 for c in self.counts))

    def window(self, index, radius: int) -> "Grid":
        """Sub-grid of ``2*radius+1`` nodes per axis around ``index``."""
        return Grid.centered(self.point(index), self.spacing, radius)

    def quadrature_weights(self) -> np.ndarray:
        """Trapezoid weights: product of spacings, halved once per face touched."""
        w = np.ones(self.counts)
        for ax, (c, h) in enumerate(zip(self.counts, self.spacing)):
            wa = np.full(c, h)
            wa[0] = wa[-1] = h / 2
            shape = [1] * self.ndim
            shape[ax] = c
            w = w * wa.reshape(shape)
        return w

    def to_dict(self) -> dict:
        return {"lower": list(self.lower), "upper": list(self.upper), "counts": list(self.counts)}


@dataclass
class GridFunction:
    """Scalar field stored as an array of shape ``grid.counts``."""

    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.size != self.grid.size:
            raise ValueError(f"{vals.size} values for a grid of {self.grid.size} nodes")
        self.values = vals.reshape(self.grid.counts)

    @classmethod
    def from_function(cls, grid: Grid, func) -> "GridFunction":
        """Sample ``func`` (anything accepting an ``(..., n)`` array) at every node."""
        return cls(grid, np.asarray(func(grid.coordinates()), dtype=float))

    @classmethod
    def constant(cls, grid: Grid, c: float) -> "GridFunction":
        return cls(grid, np.full(grid.counts, float(c)))

    def copy(self) -> "GridFunction":
        return GridFunction(self.grid, self.values.copy())

    def __getitem__(self, index):
        return self.values[tuple(index)]

    def __add__(self, other):
        if isinstance(other, GridFunction):
            self._same_grid(other)
            other = other.values
        return GridFunction(self.grid, self.values + other)

    def __sub__(self, other):
        if isinstance(other, GridFunction):
            self._same_grid(other)
            other = other.values
        return GridFunction(self.grid, self.values - other)

    def __mul__(self, c):
        return GridFunction(self.grid, self.values * c)

    __rmul__ = __mul__

    def _same_grid(self, other: "GridFunction"):
        if other.grid != self.grid:
            raise ValueError("grid functions live on different grids")

    def sup_distance(self, other: "GridFunction") -> float:
        self._same_grid(other)
        return float(np.max(np.abs(self.values - other.values)))

    def restrict(self, coarse: Grid) -> "GridFunction":
        """Values at the nodes of a grid this one refines (stride sampling)."""
        strides = []
        for cf, cc, lo_f, lo_c, hi_f, hi_c in zip(self.grid.counts, coarse.counts, self.grid.lower,
                                                  coarse.lower, self.grid.upper, coarse.upper):
            if lo_f != lo_c or hi_f != hi_c or (cf - 1) % (cc - 1):
                raise ValueError("target grid is not a coarsening of this grid")
            strides.append((cf - 1) // (cc - 1))
        return GridFunction(coarse, self.values[tuple(slice(None, None, s) for s in strides)])

    # CSV: one row per node, coordinates then value

    def to_csv(self, path=None, value_name: str = "value") -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow([f"x{i + 1}" for i in range(self.grid.ndim)] + [value_name])
        coords = self.grid.coordinates().reshape(-1, self.grid.ndim)
        for x, v in zip(coords, self.values.ravel()):
            writer.writerow([format_float(c) for c in x] + [format_float(v)])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, grid: Grid, source) -> "GridFunction":
        """Read a CSV written by :meth:`to_csv` back onto ``grid``."""
        text = Path(source).read_text() if not isinstance(source, str) or "\n" not in source else source
        rows = list(csv.reader(io.StringIO(text)))[1:]
        values = np.full(grid.counts, np.nan)
        for row in rows:
            x = [float(c) for c in row[:-1]]
            values[grid.nearest_index(x)] = float(row[-1])
        if np.isnan(values).any():
            raise ValueError("CSV does not cover every grid node")
        return cls(grid, values)
