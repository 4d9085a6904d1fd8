"""Semi-Lagrangian solver for the scalar discounted equation a v + H(x, Dv) = f(x).

The discrete operator is

    (B v)(x) = min_q  w * (L(x, q) + f(x)) + exp(-a dt) * v(x - q dt),

with w = (1 - exp(-a dt)) / a (w = dt when a = 0) and the minimum taken over a
uniform velocity grid in [-Q, Q]^dim containing q = 0. B is monotone and, for
a > 0, a sup-norm contraction with factor exp(-a dt). With linear
interpolation it is the Bellman operator of a finite controlled Markov chain,
which is what makes exact discrete comparison arguments available.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from functools import lru_cache
from itertools import product

import numpy as np

from .core import GridField, HJSystemsError, TorusGrid, interpolate, interpolation_stencil
from .hamiltonian import HamiltonianComponent, eval_lagrangian

logger = logging.getLogger(__name__)

TIE_TOL = 1e-12


class SolverError(HJSystemsError):
    module = "discounted"


class MaxIterationsExceeded(SolverError):
    def __init__(self, msg: str, last_increment: float, value=None):
        super().__init__(f"{msg} (last increment {last_increment:.3e})")
        self.last_increment = last_increment
        self.value = value


class ComparisonViolated(SolverError):
    def __init__(self, worst_node: int, gap: float):
        super().__init__(f"sub exceeds sol by {gap:.3e} at node {worst_node}")
        self.worst_node = worst_node
        self.gap = gap


@dataclass(frozen=True)
class SolverConfig:
    """Knobs of the semi-Lagrangian fixed-point solver.

    ``dt``, ``speed_bound`` and ``candidates_per_axis`` set to None mean
    "choose from the problem"; :func:`resolve_config` fills them in. The
    automatic time step is h / speed_bound, so every departure point stays
    within one cell and the scheme coincides with a monotone upwind scheme.
    """

    dt: float | None = None
    speed_bound: float | None = None
    candidates_per_axis: int | None = None
    fp_tolerance: float = 1e-9
    max_iterations: int = 200_000
    accelerate: bool = True

    def __post_init__(self):
        if self.dt is not None and not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.speed_bound is not None and not self.speed_bound > 0:
            raise ValueError("speed_bound must be positive")
        if self.candidates_per_axis is not None:
            if self.candidates_per_axis < 1 or self.candidates_per_axis % 2 == 0:
                raise ValueError("candidates_per_axis must be a positive odd integer")
        if not self.fp_tolerance > 0 or self.max_iterations < 1:
            raise ValueError("fp_tolerance and max_iterations must be positive")


def default_speed_bound(components, beta_upper: float | None = None) -> float:
    """1.5 x the largest optimal speed any critical subsolution can ask for.

    For H = (c/2)|p|^2 + V the optimal velocity is c p, and |p| is bounded by
    sqrt(2 (beta - V) / c). ``beta_upper`` defaults to max_i max V_i, which is
    always a supercritical level (constants are subsolutions there).
    """
    if beta_upper is None:
        beta_upper = max(c.potential.constant + c.potential.bound for c in components)
    speeds = [
        np.sqrt(2.0 * c.kinetic_scale * max(beta_upper - (c.potential.constant - c.potential.bound), 0.0))
        for c in components
    ]
    return max(1.0, 1.5 * max(speeds))


def resolve_config(cfg: SolverConfig, components, grid: TorusGrid) -> SolverConfig:
    if cfg.speed_bound is None:
        cfg = replace(cfg, speed_bound=float(default_speed_bound(components)))
    if cfg.candidates_per_axis is None:
        cfg = replace(cfg, candidates_per_axis=41 if grid.dim == 1 else 21)
    if cfg.dt is None:
        cfg = replace(cfg, dt=grid.h / cfg.speed_bound)
    return cfg


@dataclass(frozen=True)
class DiscountedProblem:
    """a v + H(x, Dv) = f(x). ``discount == 0`` is accepted (undiscounted value iteration)."""

    hamiltonian: HamiltonianComponent
    discount: float
    source: GridField
    component_index: int = 0

    def __post_init__(self):
        if not self.discount >= 0:
            raise ValueError("discount must be non-negative")


def velocity_candidates(dim: int, speed_bound: float, per_axis: int) -> np.ndarray:
    """Uniform grid over [-Q, Q]^dim in lexicographic order; contains 0."""
    axis = np.linspace(-speed_bound, speed_bound, per_axis)
    axis[per_axis // 2] = 0.0
    return np.array(list(product(axis, repeat=dim)), dtype=float)


def discount_weights(discount: float, dt: float) -> tuple[float, float]:
    """(w, exp(-a dt)) with w = int_0^dt exp(-a s) ds."""
    if discount == 0:
        return dt, 1.0
    e = np.exp(-discount * dt)
    return float(-np.expm1(-discount * dt) / discount), float(e)


class SemiLagrangianOperator:
    """Precomputed stencils of B for one (grid, Hamiltonian, discount, config)."""

    def __init__(self, grid: TorusGrid, hamiltonian: HamiltonianComponent, discount: float, cfg: SolverConfig):
        if cfg.dt is None or cfg.speed_bound is None or cfg.candidates_per_axis is None:
            raise ValueError("config must be resolved (see resolve_config)")
        self.grid = grid
        self.hamiltonian = hamiltonian
        self.discount = float(discount)
        self.cfg = cfg
        self.q = velocity_candidates(grid.dim, cfg.speed_bound, cfg.candidates_per_axis)
        self.weight, self.factor = discount_weights(self.discount, cfg.dt)
        x = grid.coords()
        xq = x[:, None, :] - cfg.dt * self.q[None, :, :]
        self.idx, wts = interpolation_stencil(grid, xq)
        self.ewts = self.factor * wts
        lag = eval_lagrangian(hamiltonian, np.broadcast_to(x[:, None, :], xq.shape), np.broadcast_to(self.q[None], xq.shape))
        self.running = self.weight * lag

    def candidate_values(self, v: np.ndarray, f: np.ndarray) -> np.ndarray:
        vals = self.running + (self.weight * f)[:, None]
        for k in range(self.idx.shape[0]):
            vals += self.ewts[k] * v[self.idx[k]]
        return vals

    def apply(self, v: np.ndarray, f: np.ndarray) -> np.ndarray:
        return self.candidate_values(v, f).min(axis=1)

    def policy(self, v: np.ndarray, f: np.ndarray) -> np.ndarray:
        return _tie_break_argmin(self.candidate_values(v, f))

    def candidates_at(self, x: np.ndarray, v: GridField, f_value: float) -> np.ndarray:
        """Bellman candidate values at an arbitrary point ``x`` (shape ``(dim,)``)."""
        pts = x[None, :] - self.cfg.dt * self.q
        lag = eval_lagrangian(self.hamiltonian, np.broadcast_to(x, pts.shape), self.q)
        return self.weight * (lag + f_value) + self.factor * interpolate(v, pts)


def _tie_break_argmin(vals: np.ndarray) -> np.ndarray:
    """First (lexicographically smallest velocity) index within TIE_TOL of the minimum."""
    best = vals.min(axis=-1, keepdims=True)
    return np.argmax(vals <= best + TIE_TOL, axis=-1)


@lru_cache(maxsize=64)
def get_operator(grid: TorusGrid, hamiltonian: HamiltonianComponent, discount: float, cfg: SolverConfig):
    return SemiLagrangianOperator(grid, hamiltonian, discount, cfg)


def _operator_for(prob: DiscountedProblem, cfg: SolverConfig) -> SemiLagrangianOperator:
    grid = prob.source.grid
    cfg = resolve_config(cfg, [prob.hamiltonian], grid)
    return get_operator(grid, prob.hamiltonian, float(prob.discount), cfg)


def bellman_update(v: GridField, prob: DiscountedProblem, cfg: SolverConfig) -> GridField:
    op = _operator_for(prob, cfg)
    return GridField(v.grid, op.apply(v.flat, prob.source.flat))


def iterate_fixed_point(op: SemiLagrangianOperator, f: np.ndarray, v0: np.ndarray, tol: float,
                        max_iter: int, accelerate: bool = True) -> tuple[np.ndarray, int, float]:
    """Iterate ``op`` to a sup-norm increment below ``tol``.

    With ``accelerate`` (and a > 0) every step is followed by the lower
    MacQueen shift v <- Bv + E/(1-E) min(Bv - v). The shifted iterate is a
    discrete subsolution below the fixed point, so from a subsolution start the
    sequence stays nondecreasing and dominates plain iteration.
    """
    v = np.array(v0, dtype=float)
    ratio = op.factor / (1.0 - op.factor) if accelerate and op.factor < 1.0 else 0.0
    inc = np.inf
    for it in range(1, max_iter + 1):
        bv = op.apply(v, f)
        if ratio:
            bv += ratio * float(np.min(bv - v))
        inc = float(np.max(np.abs(bv - v)))
        v = bv
        if inc < tol:
            return v, it, inc
    raise MaxIterationsExceeded("discounted fixed point not reached", inc, v)


def solve_discounted(prob: DiscountedProblem, cfg: SolverConfig, v0: GridField | None = None) -> GridField:
    """Discrete fixed point of B; starts from f/a (or f when a = 0) unless ``v0`` is given."""
    op = _operator_for(prob, cfg)
    f = prob.source.flat
    if v0 is None:
        start = f / prob.discount if prob.discount > 0 else np.array(f)
    else:
        start = v0.flat
    v, it, inc = iterate_fixed_point(op, f, start, cfg.fp_tolerance, cfg.max_iterations, cfg.accelerate)
    logger.debug("discounted solve: %d iterations, last increment %.2e", it, inc)
    return GridField(prob.source.grid, v)


@dataclass
class Trajectory:
    """Backward greedy path: ``points[k]`` is gamma(-k dt)."""

    times: np.ndarray
    points: np.ndarray
    velocities: np.ndarray
    accumulated_cost: np.ndarray
    running_cost: float
    terminal_value: float
    start_value: float
    discount_factor: float = field(default=1.0)

    @property
    def value_gap(self) -> float:
        return abs(self.running_cost + self.discount_factor * self.terminal_value - self.start_value)


def extract_trajectory(v: GridField, prob: DiscountedProblem, cfg: SolverConfig, x0, horizon: float) -> Trajectory:
    """Follow the argmin velocity of B backwards in time from ``x0`` for ``horizon``."""
    op = _operator_for(prob, cfg)
    grid = v.grid
    dt = op.cfg.dt
    steps = int(round(horizon / dt)) if horizon > 0 else 0
    x = np.mod(np.asarray(x0, dtype=float).reshape(grid.dim), 1.0)
    pts, vels, acc = [x.copy()], [], [0.0]
    cost, disc = 0.0, 1.0
    for _ in range(steps + 1):
        f_x = interpolate(prob.source, x)
        vals = op.candidates_at(x, v, f_x)
        j = int(_tie_break_argmin(vals))
        q = op.q[j]
        vels.append(q.copy())
        if len(pts) > steps:
            break
        lag = float(eval_lagrangian(prob.hamiltonian, x, q))
        cost += disc * op.weight * (lag + f_x)
        disc *= op.factor
        x = np.mod(x - dt * q, 1.0)
        pts.append(x.copy())
        acc.append(cost)
    return Trajectory(
        times=-dt * np.arange(len(pts)),
        points=np.array(pts),
        velocities=np.array(vels),
        accumulated_cost=np.array(acc),
        running_cost=cost,
        terminal_value=interpolate(v, pts[-1]),
        start_value=interpolate(v, pts[0]),
        discount_factor=disc,
    )


@dataclass(frozen=True)
class ComparisonReport:
    worst_gap: float
    worst_node: int
    passed: bool


def comparison_check(sub: GridField, sol: GridField, tol: float) -> ComparisonReport:
    """Assert sub <= sol + tol nodewise; raise ComparisonViolated otherwise."""
    if sub.grid != sol.grid:
        raise SolverError("fields live on different grids")
    gap = sub.flat - sol.flat
    node = int(np.argmax(gap))
    worst = float(gap[node])
    if worst > tol:
        raise ComparisonViolated(node, worst)
    return ComparisonReport(worst, node, True)
