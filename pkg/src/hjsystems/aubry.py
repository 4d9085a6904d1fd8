"""Aubry-set estimates: pinning mask, equilibria, isolated points, rigidity."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np

from .core import HJSystemsError, TorusGrid, VectorField, connected_components
from .critical import AlgorithmHistory, SystemProblem

logger = logging.getLogger(__name__)


class AubryError(HJSystemsError):
    module = "aubry"


class RigidityViolated(AubryError):
    def __init__(self, worst_node: int, deviation: float, k: float):
        super().__init__(f"u - v deviates from {k:.6g} * 1 by {deviation:.3e} at node {worst_node}")
        self.worst_node = worst_node
        self.deviation = deviation
        self.k = k


class IsolatedPointWarning(UserWarning):
    pass


@dataclass(frozen=True)
class EquilibriumList:
    nodes: np.ndarray
    values: np.ndarray
    beta: float
    tol: float


def detect_equilibria(sys: SystemProblem, beta: float, tol: float = 1e-6) -> EquilibriumList:
    """Nodes where o . min_p H(x) is within ``tol`` of ``beta``."""
    vals = sys.o @ sys.min_h()
    nodes = np.flatnonzero(np.abs(vals - beta) <= tol)
    return EquilibriumList(nodes, vals[nodes], float(beta), float(tol))


@dataclass(frozen=True)
class AubryEstimate:
    grid: TorusGrid
    mask: np.ndarray
    method: str
    slack: np.ndarray
    pin_tol: float

    @property
    def nodes(self) -> np.ndarray:
        return np.flatnonzero(self.mask)


def estimate_from_pinning(hist: AlgorithmHistory, grid: TorusGrid, pin_tol: float | None = None,
                          equilibria: EquilibriumList | None = None) -> AubryEstimate:
    """Nodes the algorithm did not move (within ``pin_tol``), united with known equilibria.

    Pinning is necessary for membership, so the mask over-covers the Aubry set.
    ``pin_tol`` defaults to 50 x the sweep stop tolerance.
    """
    if pin_tol is None:
        pin_tol = 50.0 * hist.stop_tol
    growth = hist.growth
    mask = growth.max(axis=0) <= pin_tol
    method = "pinning"
    if equilibria is not None:
        mask[equilibria.nodes] = True
        method = "union"
    return AubryEstimate(grid, mask, method, growth.min(axis=0), float(pin_tol))


@dataclass(frozen=True)
class IsolatedReport:
    isolated: list[int]
    violations: list[int]

    @property
    def passed(self) -> bool:
        return not self.violations


def classify_isolated(est: AubryEstimate, eq: EquilibriumList) -> IsolatedReport:
    """Every single-node component of the mask should be an equilibrium.

    Violations are reported as warnings: a coarse grid can fake isolation.
    """
    comps = connected_components(est.grid, est.mask)
    isolated = [c[0] for c in comps if len(c) == 1]
    eq_set = set(int(k) for k in eq.nodes)
    bad = [k for k in isolated if k not in eq_set]
    if bad:
        warnings.warn(f"isolated mask nodes that are not equilibria: {bad}", IsolatedPointWarning, stacklevel=2)
    return IsolatedReport(isolated, bad)


@dataclass(frozen=True)
class RigidityReport:
    k: float
    worst_deviation: float
    worst_node: int


def rigidity_check(u: VectorField, v: VectorField, est: AubryEstimate, tol: float) -> RigidityReport:
    """On mask nodes u - v must be k * 1 for a single constant k."""
    nodes = est.nodes
    if nodes.size == 0:
        return RigidityReport(0.0, 0.0, -1)
    d = (u.stack() - v.stack())[:, nodes]
    k = float(d.mean())
    dev = np.abs(d - k).max(axis=0)
    j = int(np.argmax(dev))
    if dev[j] > tol:
        raise RigidityViolated(int(nodes[j]), float(dev[j]), k)
    return RigidityReport(k, float(dev[j]), int(nodes[j]))
