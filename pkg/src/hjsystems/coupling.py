"""Coupling matrices: structural validation and the equilibrium distribution."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import HJSystemsError


class CouplingError(HJSystemsError, ValueError):
    module = "coupling"
    axiom = "invalid"


class OffDiagonalPositive(CouplingError):
    axiom = "OffDiagonalPositive"


class RowSumNonzero(CouplingError):
    axiom = "RowSumNonzero"


class Reducible(CouplingError):
    axiom = "Reducible"


class NumericalRankDeficiency(CouplingError):
    axiom = "NumericalRankDeficiency"


ROW_SUM_TOL = 1e-12


@dataclass(frozen=True)
class CouplingMatrix:
    entries: np.ndarray = field(repr=False)

    @property
    def m(self) -> int:
        return self.entries.shape[0]

    @property
    def diagonal(self) -> np.ndarray:
        return np.diag(self.entries).copy()

    def apply(self, u: np.ndarray) -> np.ndarray:
        """(A u)_i = sum_j a_ij u_j for ``u`` of shape ``(m, ...)``."""
        return np.tensordot(self.entries, u, axes=(1, 0))


def _reachable(adj: np.ndarray, start: int) -> set[int]:
    seen, stack = {start}, [start]
    while stack:
        i = stack.pop()
        for j in np.flatnonzero(adj[i]):
            if j not in seen:
                seen.add(int(j))
                stack.append(int(j))
    return seen


def validate(entries) -> CouplingMatrix:
    a = np.array(entries, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise CouplingError(f"coupling must be a non-empty square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise CouplingError("coupling has non-finite entries")
    m = a.shape[0]
    off = a - np.diag(np.diag(a))
    if np.any(off > 0):
        i, j = np.argwhere(off > 0)[0]
        raise OffDiagonalPositive(f"a[{i}][{j}] = {a[i, j]} > 0")
    sums = a.sum(axis=1)
    bad = np.flatnonzero(np.abs(sums) > ROW_SUM_TOL)
    if bad.size:
        raise RowSumNonzero(f"row {bad[0]} sums to {sums[bad[0]]}")
    if m > 1:
        adj = off < 0
        if len(_reachable(adj, 0)) < m or len(_reachable(adj.T, 0)) < m:
            raise Reducible("the graph i -> j (a_ij < 0) is not strongly connected")
        if np.any(np.diag(a) <= 0):
            raise Reducible("non-positive diagonal entry")
    a.setflags(write=False)
    return CouplingMatrix(a)


def equilibrium_distribution(coupling: CouplingMatrix, *, rtol: float = 1e-10) -> np.ndarray:
    """The probability vector o with o A = 0."""
    a = coupling.entries
    m = coupling.m
    if m == 1:
        return np.ones(1)
    # o A = 0 is A^T o = 0; replace one redundant equation with the normalisation.
    system = np.vstack([a.T[:-1], np.ones(m)])
    rhs = np.zeros(m)
    rhs[-1] = 1.0
    s = np.linalg.svd(system, compute_uv=False)
    if s[-1] <= rtol * s[0]:
        raise NumericalRankDeficiency(f"augmented system singular (condition {s[0] / max(s[-1], 1e-300):.3g})")
    o = np.linalg.solve(system, rhs)
    if np.any(o <= 0):
        raise NumericalRankDeficiency(f"equilibrium distribution not positive: {o}")
    return o
