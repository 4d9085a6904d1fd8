"""Scalar eikonal machinery: intrinsic distances, critical values, maximal subsolutions.

For a component H_i and a frozen field u the effective Hamiltonian is
H_i(x, p) + (A u(x))_i. Its a-sublevel support function sigma_a is the
infinitesimal length of the intrinsic semidistance S_a, approximated here by
shortest paths on the grid graph (axis neighbours, plus diagonals in 2D).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import dijkstra

from .core import GridField, HJSystemsError, TorusGrid
from .hamiltonian import HamiltonianComponent


class EikonalError(HJSystemsError):
    module = "eikonal"


class InfeasibleLevel(EikonalError):
    pass


class IncompatibleTrace(EikonalError):
    def __init__(self, y: int, x: int, excess: float):
        super().__init__(f"trace difference at ({x}, {y}) exceeds the distance by {excess:.3e}")
        self.pair = (y, x)
        self.excess = excess


@dataclass(frozen=True)
class EffectiveHamiltonian:
    """H(x, p) + shift(x); with shift = (A u)_i this is the frozen i-th equation."""

    base: HamiltonianComponent
    shift: GridField

    @property
    def grid(self) -> TorusGrid:
        return self.shift.grid

    def min_h(self) -> np.ndarray:
        return self.base.potential(self.grid.coords()) + self.shift.flat

    @classmethod
    def unshifted(cls, base: HamiltonianComponent, grid: TorusGrid) -> EffectiveHamiltonian:
        return cls(base, GridField.constant(grid, 0.0))


def _edge_offsets(dim: int) -> list[tuple[int, ...]]:
    if dim == 1:
        return [(-1,), (1,)]
    return [o for o in product((-1, 0, 1), repeat=2) if o != (0, 0)]


@dataclass
class IntrinsicMetricGraph:
    """Directed grid graph with cost(x -> y) = |y - x| * mean of sigma_a(., unit direction) at both ends."""

    eff: EffectiveHamiltonian
    level: float
    matrix: sp.csr_matrix = field(repr=False)

    @classmethod
    def build(cls, eff: EffectiveHamiltonian, level: float, atol: float = 1e-12,
              allow_infeasible: bool = False) -> IntrinsicMetricGraph:
        """With ``allow_infeasible`` nodes with an empty sublevel lose all incident edges instead of raising."""
        grid = eff.grid
        gap = level - eff.min_h()
        feasible = gap >= -atol
        if not allow_infeasible and not feasible.all():
            k = int(np.argmin(gap))
            raise InfeasibleLevel(f"level {level} is below min_p H at node {k} by {-gap[k]:.3e}")
        # support function in a unit direction; mechanical sublevels are balls
        unit = np.sqrt(2.0 * np.maximum(gap, 0.0) / eff.base.kinetic_scale)
        nodes = np.arange(grid.size)
        multi = np.array(np.unravel_index(nodes, grid.shape))
        rows, cols, data = [], [], []
        for off in _edge_offsets(grid.dim):
            nb = np.ravel_multi_index(tuple((multi[a] + off[a]) % grid.n for a in range(grid.dim)), grid.shape)
            length = grid.h * float(np.linalg.norm(off))
            keep = feasible & feasible[nb]
            rows.append(nodes[keep])
            cols.append(nb[keep])
            data.append(length * 0.5 * (unit[keep] + unit[nb][keep]))
        mat = sp.csr_matrix((np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
                            shape=(grid.size, grid.size))
        return cls(eff, float(level), mat)

    @property
    def grid(self) -> TorusGrid:
        return self.eff.grid

    def distances(self, sources) -> np.ndarray:
        """S_a(y, .) for each source y, shape ``(len(sources), size)``."""
        return np.atleast_2d(dijkstra(self.matrix, directed=True, indices=np.atleast_1d(sources)))


def intrinsic_distance(metric: IntrinsicMetricGraph, source: int) -> GridField:
    return GridField(metric.grid, metric.distances([source])[0])


def scalar_critical_value(eff: EffectiveHamiltonian) -> float:
    """max_x min_p of the effective Hamiltonian; exact for kinetic-plus-potential Hamiltonians."""
    return float(np.max(eff.min_h()))


def scalar_aubry(eff: EffectiveHamiltonian, c: float, tol: float = 1e-6) -> np.ndarray:
    """Nodes where min_p of the effective Hamiltonian reaches ``c`` (within ``tol``)."""
    return np.flatnonzero(np.abs(eff.min_h() - c) <= tol)


def maximal_subsolution(metric: IntrinsicMetricGraph, trace_nodes, trace_values, tol: float = 1e-12) -> GridField:
    """min over trace nodes y of trace(y) + S(y, x).

    Raises IncompatibleTrace if trace(x) - trace(y) > S(y, x) + tol for some trace pair.
    """
    nodes = np.atleast_1d(np.asarray(trace_nodes, dtype=int))
    vals = np.atleast_1d(np.asarray(trace_values, dtype=float))
    if nodes.shape != vals.shape or nodes.size == 0:
        raise EikonalError("trace nodes and values must be non-empty and of equal length")
    dist = metric.distances(nodes)
    between = dist[:, nodes]  # between[a, b] = S(y_a, y_b)
    excess = vals[None, :] - vals[:, None] - between
    a, b = np.unravel_index(int(np.argmax(excess)), excess.shape)
    if excess[a, b] > tol:
        raise IncompatibleTrace(int(nodes[a]), int(nodes[b]), float(excess[a, b]))
    return GridField(metric.grid, np.min(vals[:, None] + dist, axis=0))


@dataclass(frozen=True)
class MetricCheckReport:
    pairs_checked: int
    violations: list[tuple[int, int, float]]
    worst_excess: float

    @property
    def passed(self) -> bool:
        return not self.violations


def metric_subsolution_check(u: GridField, metric: IntrinsicMetricGraph, sample_pairs: int = 1000,
                             tol: float = 1e-9, seed: int = 0, full_limit: int = 4096,
                             max_report: int = 20) -> MetricCheckReport:
    """Check u(x) - u(y) <= S_a(y, x) + tol; all pairs when the grid has at most ``full_limit`` nodes."""
    grid = metric.grid
    vals = u.flat
    if grid.size <= full_limit:
        sources = np.arange(grid.size)
    else:
        rng = np.random.default_rng(seed)
        sources = np.unique(rng.integers(0, grid.size, size=max(1, sample_pairs // 32)))
    violations = []
    worst = -np.inf
    checked = 0
    chunk = 256
    for start in range(0, sources.size, chunk):
        src = sources[start:start + chunk]
        dist = metric.distances(src)
        excess = vals[None, :] - vals[src, None] - dist
        checked += excess.size
        worst = max(worst, float(excess.max()))
        for a, x in np.argwhere(excess > tol):
            if len(violations) < max_report:
                violations.append((int(src[a]), int(x), float(excess[a, x])))
            else:
                break
    return MetricCheckReport(checked, violations, worst)
