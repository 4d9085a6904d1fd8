"""Periodic grids on the unit torus, fields on them, and the stencils shared by the solvers."""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product

import numpy as np


class HJSystemsError(Exception):
    """Base class for every error raised by the package.

    ``module`` names the subsystem that raised it; the CLI prefixes messages with it.
    """

    module = "core"


class GridError(HJSystemsError, ValueError):
    pass


@dataclass(frozen=True)
class TorusGrid:
    """Uniform grid on [0, 1)^dim with ``n`` nodes per axis and periodic index arithmetic."""

    dim: int
    n: int

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise GridError(f"dim must be 1 or 2, got {self.dim}")
        if self.n < 8:
            raise GridError(f"need at least 8 nodes per axis, got {self.n}")

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.dim

    @property
    def size(self) -> int:
        return self.n**self.dim

    def coords(self) -> np.ndarray:
        """Node coordinates, shape ``(size, dim)``, in C order of the multi-index."""
        axes = [np.arange(self.n) * self.h] * self.dim
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def multi_index(self, node: int) -> tuple[int, ...]:
        return tuple(int(k) for k in np.unravel_index(int(node) % self.size, self.shape))

    def flat_index(self, idx) -> int:
        idx = tuple(int(k) % self.n for k in np.atleast_1d(idx))
        if len(idx) != self.dim:
            raise GridError(f"index {idx} does not match dim {self.dim}")
        return int(np.ravel_multi_index(idx, self.shape))

    def nearest_node(self, x) -> int:
        x = np.mod(np.asarray(x, dtype=float).reshape(self.dim), 1.0)
        return self.flat_index(np.rint(x * self.n).astype(int))

    def shift_index(self, node: int, axis: int, step: int) -> int:
        idx = list(self.multi_index(node))
        idx[axis] += step
        return self.flat_index(idx)

    def torus_distance(self, x, y) -> float:
        d = np.abs(np.mod(np.asarray(x, float) - np.asarray(y, float) + 0.5, 1.0) - 0.5)
        return float(np.linalg.norm(d))

    def neighbors(self, node: int) -> list[int]:
        """Axis neighbours (2 per axis), used for connected components."""
        out = []
        for axis in range(self.dim):
            for step in (-1, 1):
                out.append(self.shift_index(node, axis, step))
        return out


@dataclass(frozen=True)
class GridField:
    grid: TorusGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.array(self.values, dtype=float).reshape(self.grid.shape)
        if not np.all(np.isfinite(vals)):
            raise GridError("field has non-finite values")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def constant(cls, grid: TorusGrid, c: float) -> GridField:
        return cls(grid, np.full(grid.shape, float(c)))

    @classmethod
    def from_function(cls, grid: TorusGrid, fn) -> GridField:
        x = grid.coords()
        return cls(grid, np.asarray(fn(x), dtype=float).reshape(grid.shape))

    @property
    def flat(self) -> np.ndarray:
        return self.values.ravel()

    def __add__(self, other):
        if isinstance(other, GridField):
            return GridField(self.grid, self.values + other.values)
        return GridField(self.grid, self.values + other)

    def __sub__(self, other):
        if isinstance(other, GridField):
            return GridField(self.grid, self.values - other.values)
        return GridField(self.grid, self.values - other)


@dataclass(frozen=True)
class VectorField:
    components: tuple[GridField, ...]

    def __post_init__(self):
        comps = tuple(self.components)
        if not comps:
            raise GridError("a vector field needs at least one component")
        if any(c.grid != comps[0].grid for c in comps):
            raise GridError("components live on different grids")
        object.__setattr__(self, "components", comps)

    @property
    def grid(self) -> TorusGrid:
        return self.components[0].grid

    @property
    def m(self) -> int:
        return len(self.components)

    def stack(self) -> np.ndarray:
        """Values as an ``(m, size)`` array."""
        return np.stack([c.flat for c in self.components])

    @classmethod
    def from_array(cls, grid: TorusGrid, arr) -> VectorField:
        arr = np.asarray(arr, dtype=float).reshape(-1, grid.size)
        return cls(tuple(GridField(grid, row) for row in arr))

    def __getitem__(self, i) -> GridField:
        return self.components[i]


def interpolation_stencil(grid: TorusGrid, points) -> tuple[np.ndarray, np.ndarray]:
    """Flat node indices and weights of periodic multilinear interpolation.

    ``points`` has shape ``(..., dim)``; returns arrays of shape ``(2**dim, ...)``.
    """
    pts = np.asarray(points, dtype=float)
    scaled = np.mod(pts, 1.0) * grid.n
    base = np.floor(scaled)
    frac = scaled - base
    base = base.astype(np.int64) % grid.n
    corners = list(product((0, 1), repeat=grid.dim))
    idx = np.empty((len(corners),) + pts.shape[:-1], dtype=np.int64)
    wts = np.empty((len(corners),) + pts.shape[:-1])
    for c, offs in enumerate(corners):
        flat = np.zeros(pts.shape[:-1], dtype=np.int64)
        w = np.ones(pts.shape[:-1])
        for axis, o in enumerate(offs):
            flat = flat * grid.n + (base[..., axis] + o) % grid.n
            w = w * (frac[..., axis] if o else 1.0 - frac[..., axis])
        idx[c] = flat
        wts[c] = w
    return idx, wts


def interpolate(field: GridField, x) -> float | np.ndarray:
    """Periodic multilinear interpolation at one point (shape ``(dim,)``) or many (``(P, dim)``)."""
    grid = field.grid
    pts = np.asarray(x, dtype=float)
    single = pts.ndim == 0 or (pts.ndim == 1 and grid.dim > 1) or (pts.ndim == 1 and pts.size == 1)
    pts = pts.reshape(-1, grid.dim)
    idx, wts = interpolation_stencil(grid, pts)
    out = np.sum(wts * field.flat[idx], axis=0)
    return float(out[0]) if single else out


def _axis_roll(values: np.ndarray, axis: int, step: int) -> np.ndarray:
    # value at k + step
    return np.roll(values, -step, axis=axis)


def discrete_gradient(field: GridField, node: int | None = None) -> np.ndarray:
    """Central periodic differences. With ``node`` the gradient there, else shape ``(dim, *grid.shape)``."""
    u, h = field.values, field.grid.h
    g = np.stack([(_axis_roll(u, a, 1) - _axis_roll(u, a, -1)) / (2 * h) for a in range(u.ndim)])
    if node is None:
        return g
    return g.reshape(field.grid.dim, -1)[:, node].copy()


def one_sided_gradients(field: GridField, node: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Forward and backward periodic differences, per axis."""
    u, h = field.values, field.grid.h
    fwd = np.stack([(_axis_roll(u, a, 1) - u) / h for a in range(u.ndim)])
    bwd = np.stack([(u - _axis_roll(u, a, -1)) / h for a in range(u.ndim)])
    if node is None:
        return fwd, bwd
    d = field.grid.dim
    return fwd.reshape(d, -1)[:, node].copy(), bwd.reshape(d, -1)[:, node].copy()


def connected_components(grid: TorusGrid, mask: np.ndarray) -> list[list[int]]:
    """Connected components of a boolean node mask under axis-neighbour adjacency."""
    mask = np.asarray(mask, dtype=bool).ravel()
    seen = np.zeros(grid.size, dtype=bool)
    comps = []
    for start in np.flatnonzero(mask):
        if seen[start]:
            continue
        stack, comp = [int(start)], []
        seen[start] = True
        while stack:
            k = stack.pop()
            comp.append(k)
            for nb in grid.neighbors(k):
                if mask[nb] and not seen[nb]:
                    seen[nb] = True
                    stack.append(nb)
        comps.append(sorted(comp))
    return comps
