"""Finite-difference audits on computed fields: Lipschitz bounds and gradient probes."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from .core import GridField, TorusGrid, one_sided_gradients


@dataclass(frozen=True)
class LipschitzEstimate:
    value: float


def lipschitz_estimate(field: GridField) -> LipschitzEstimate:
    """Largest one-sided difference quotient over all nodes and axes."""
    arr = field.values
    h = field.grid.h
    worst = max(np.abs(np.roll(arr, -1, axis=a) - arr).max() for a in range(field.grid.dim))
    return LipschitzEstimate(float(worst / h))


def _shell(grid: TorusGrid, k: int) -> np.ndarray:
    """Integer offsets at Chebyshev distance exactly k."""
    offs = [o for o in product(range(-k, k + 1), repeat=grid.dim) if max(abs(c) for c in o) == k]
    return np.array(offs, dtype=int)


def _shell_data(field: GridField, node: int, k: int) -> tuple[np.ndarray, np.ndarray]:
    grid = field.grid
    offs = _shell(grid, k)
    base = np.array(grid.multi_index(node))
    nbrs = np.ravel_multi_index(tuple(((base + offs) % grid.n).T), grid.shape)
    return offs * grid.h, field.flat[nbrs] - field.flat[node]


@dataclass(frozen=True)
class SuperdiffEntry:
    node: int
    slope: np.ndarray
    radii: tuple[float, ...]
    eps: tuple[float, ...]
    exponent: float
    ratio: float
    lipschitz: float
    passed: bool


def superdifferential_probe(field: GridField, node: int, radii=(1, 2, 4), lip: float | None = None,
                            min_exponent: float = 1.2, max_ratio: float = 0.05,
                            zero_tol: float = 1e-12) -> SuperdiffEntry:
    """Discrete test for a nonempty superdifferential at ``node``.

    ``radii`` are shell radii in units of h. The slope is a least-squares fit
    on the innermost shell; eps(r) is the largest positive excess of the field
    over that linear model on the shell of radius r.
    """
    radii = tuple(sorted(int(r) for r in radii))
    if lip is None:
        lip = lipschitz_estimate(field).value
    dy, du = _shell_data(field, node, radii[0])
    slope = np.linalg.lstsq(dy, du, rcond=None)[0]
    eps = []
    for k in radii:
        dy, du = _shell_data(field, node, k)
        eps.append(max(float(np.max(du - dy @ slope)), 0.0))
    h = field.grid.h
    rs = np.array(radii, dtype=float) * h
    scale = max(1.0, float(np.abs(field.flat).max()))
    pos = np.array(eps) > zero_tol * scale
    if pos.sum() >= 2:
        exponent = float(np.polyfit(np.log(rs[pos]), np.log(np.array(eps)[pos]), 1)[0])
    else:
        exponent = np.inf
    ratio = eps[0] / rs[0]
    passed = exponent >= min_exponent or ratio <= max_ratio * lip or eps[0] <= zero_tol * scale
    return SuperdiffEntry(node, slope, tuple(float(r) for r in rs), tuple(eps), exponent, float(ratio), float(lip), bool(passed))


@dataclass(frozen=True)
class StrictDiffReport:
    node: int
    gaps: dict[int, float]
    threshold: float

    @property
    def worst(self) -> float:
        return max(self.gaps.values())

    @property
    def passed(self) -> bool:
        return self.worst <= self.threshold


def strict_differentiability_probe(field: GridField, node: int, lip: float | None = None,
                                   factor: float = 5.0) -> StrictDiffReport:
    """Forward and backward differences must agree within factor * h * lip, at the node and its axis neighbours."""
    grid = field.grid
    if lip is None:
        lip = lipschitz_estimate(field).value
    gaps = {}
    for k in (node, *grid.neighbors(node)):
        fwd, bwd = one_sided_gradients(field, k)
        gaps[int(k)] = float(np.max(np.abs(np.asarray(fwd) - np.asarray(bwd))))
    return StrictDiffReport(int(node), gaps, factor * grid.h * lip)
