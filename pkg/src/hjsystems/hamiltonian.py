"""Mechanical Hamiltonians H(x, p) = (c0/2)|p|^2 + V(x) with trigonometric potentials.

Every quantity the solvers need (Lagrangian, minimum over momenta, support
function of a sublevel) has a closed form for this family.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import HJSystemsError


class EmptySublevel(HJSystemsError, ValueError):
    module = "hamiltonian"


@dataclass(frozen=True)
class Mode:
    wavevector: tuple[int, ...]
    amplitude: float
    phase: float = 0.0


@dataclass(frozen=True)
class TrigPotential:
    """V(x) = constant + sum amplitude * cos(2 pi k.x + phase) on the ``dim``-torus.

    Points are arrays of shape ``(..., dim)``; in 1D bare scalars are accepted too.
    """

    constant: float = 0.0
    modes: tuple[Mode, ...] = field(default_factory=tuple)
    dim: int = 1

    def __post_init__(self):
        modes = tuple(self.modes)
        for mode in modes:
            if len(mode.wavevector) != self.dim:
                raise ValueError(f"wavevector {mode.wavevector} does not match dim {self.dim}")
        object.__setattr__(self, "modes", modes)

    def _phase_arg(self, x: np.ndarray, k: tuple[int, ...]) -> np.ndarray:
        if self.dim == 1 and (x.ndim == 0 or x.shape[-1] != 1):
            return x * k[0]
        return x @ np.asarray(k, dtype=float)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        lead = x.shape if self.dim == 1 and (x.ndim == 0 or x.shape[-1] != 1) else x.shape[:-1]
        out = np.full(lead, float(self.constant))
        for mode in self.modes:
            out = out + mode.amplitude * np.cos(2 * np.pi * self._phase_arg(x, mode.wavevector) + mode.phase)
        return float(out) if out.ndim == 0 else out

    @property
    def bound(self) -> float:
        """Sum of |amplitude|; V stays within constant +- bound."""
        return sum(abs(m.amplitude) for m in self.modes)


@dataclass(frozen=True)
class HamiltonianComponent:
    """H(x, p) = (kinetic_scale/2)|p|^2 + V(x); L(x, q) = |q|^2/(2 kinetic_scale) - V(x)."""

    potential: TrigPotential
    kinetic_scale: float = 1.0

    def __post_init__(self):
        if not self.kinetic_scale > 0:
            raise ValueError("kinetic_scale must be positive")

    @property
    def dim(self) -> int:
        return self.potential.dim


def _sq_norm(v, dim: int):
    v = np.asarray(v, dtype=float)
    if dim == 1 and (v.ndim == 0 or v.shape[-1] != 1):
        return v * v
    return np.sum(v * v, axis=-1)


def eval_h(comp: HamiltonianComponent, x, p):
    return 0.5 * comp.kinetic_scale * _sq_norm(p, comp.dim) + comp.potential(x)


def eval_lagrangian(comp: HamiltonianComponent, x, q):
    return 0.5 * _sq_norm(q, comp.dim) / comp.kinetic_scale - comp.potential(x)


def min_over_p(comp: HamiltonianComponent, x):
    return comp.potential(x)


def support_function(comp: HamiltonianComponent, a: float, x, q, *, atol: float = 1e-12):
    """max{p.q : H(x, p) <= a}.

    Raises EmptySublevel if the sublevel is empty at some requested point
    (``a < V(x) - atol``). At ``a == V(x)`` the sublevel is {0} and the value is 0.
    """
    gap = a - np.asarray(comp.potential(x), dtype=float)
    if np.any(gap < -atol):
        raise EmptySublevel(f"level {a} lies below V by {-float(np.min(gap)):.3g}")
    radius = np.sqrt(2.0 * np.maximum(gap, 0.0) / comp.kinetic_scale)
    out = np.sqrt(_sq_norm(q, comp.dim)) * radius
    return float(out) if np.ndim(out) == 0 else out
