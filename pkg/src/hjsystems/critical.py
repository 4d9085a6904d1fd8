"""Critical value estimation and the monotone scalar-reduction algorithm.

Each sweep freezes all components but one and solves the resulting scalar
discounted equation, in index order (Gauss-Seidel). Starting from a critical
subsolution the sweeps produce a nondecreasing sequence of subsolutions that
never moves on the Aubry set; its limit solves the critical system.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .core import GridField, HJSystemsError, TorusGrid, VectorField, one_sided_gradients
from .coupling import CouplingMatrix, equilibrium_distribution
from .discounted import (
    MaxIterationsExceeded,
    SemiLagrangianOperator,
    SolverConfig,
    get_operator,
    iterate_fixed_point,
    resolve_config,
)
from .hamiltonian import HamiltonianComponent

logger = logging.getLogger(__name__)

DEFAULT_DELTAS = (0.1, 0.05, 0.025)


class CriticalError(HJSystemsError):
    module = "critical"


class NoConvergence(CriticalError):
    pass


class LowerBoundViolated(CriticalError):
    pass


class SubsolutionConstructionFailed(CriticalError):
    pass


class NotConverged(CriticalError):
    def __init__(self, msg: str, history: AlgorithmHistory):
        super().__init__(msg)
        self.history = history


@dataclass(frozen=True)
class SystemProblem:
    grid: TorusGrid
    components: tuple[HamiltonianComponent, ...]
    coupling: CouplingMatrix

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))
        if len(self.components) != self.coupling.m:
            raise CriticalError(f"{len(self.components)} Hamiltonians for a {self.coupling.m}x{self.coupling.m} coupling")
        for c in self.components:
            if c.dim != self.grid.dim:
                raise CriticalError("Hamiltonian dimension does not match the grid")

    @property
    def m(self) -> int:
        return self.coupling.m

    @property
    def o(self) -> np.ndarray:
        return equilibrium_distribution(self.coupling)

    def min_h(self) -> np.ndarray:
        """min_p H_i at every node, shape ``(m, size)``."""
        x = self.grid.coords()
        return np.stack([c.potential(x) for c in self.components])

    def equilibrium_bound(self) -> float:
        """max_x o . min_p H(x), a lower bound for the critical value."""
        return float(np.max(self.o @ self.min_h()))

    def resolve(self, cfg: SolverConfig) -> SolverConfig:
        return resolve_config(cfg, self.components, self.grid)

    def operators(self, cfg: SolverConfig, extra_discount: float = 0.0) -> list[SemiLagrangianOperator]:
        cfg = self.resolve(cfg)
        a = self.coupling.diagonal
        return [get_operator(self.grid, c, float(a[i] + extra_discount), cfg) for i, c in enumerate(self.components)]

    def frozen_source(self, v: np.ndarray, i: int, beta: float) -> np.ndarray:
        """f_i = beta - sum_{j != i} a_ij v_j."""
        row = self.coupling.entries[i]
        out = np.full(v.shape[1], float(beta))
        for j in range(self.m):
            if j != i and row[j] != 0.0:
                out -= row[j] * v[j]
        return out


# ---------------------------------------------------------------------------
# vanishing discount


def _gauss_seidel_step(sys: SystemProblem, ops, u: np.ndarray, beta: float) -> np.ndarray:
    new = u.copy()
    for i, op in enumerate(ops):
        new[i] = op.apply(new[i], sys.frozen_source(new, i, beta))
    return new


def _shift_response(sys: SystemProblem, ops) -> np.ndarray:
    """r with GS(u + c 1) = GS(u) + c r, per component."""
    a = sys.coupling.entries
    r = np.ones(sys.m)
    for i, op in enumerate(ops):
        coupled = sum(-a[i, j] * (r[j] if j < i else 1.0) for j in range(sys.m) if j != i)
        r[i] = op.factor + op.weight * coupled
    return r


def solve_discounted_system(sys: SystemProblem, cfg: SolverConfig, delta: float,
                            u0: np.ndarray | None = None, *, extrapolate_every: int = 100) -> np.ndarray:
    """Discrete solution of delta u_i + H_i(x, Du_i) + (A u)_i = 0, shape ``(m, size)``.

    Gauss-Seidel over components, one Bellman step each, with MacQueen
    bracketing on the constant mode. Several separated wells each carry
    their own slowly decaying constant, which one global shift cannot
    remove; every ``extrapolate_every`` steps the dominant geometric mode is
    extrapolated away (0 disables this). The brackets stay valid for any
    iterate, so the stopping test is unaffected: it requires the bracket on
    delta * u below ``fp_tolerance``.
    """
    cfg = sys.resolve(cfg)
    ops = sys.operators(cfg, extra_discount=delta)
    r = _shift_response(sys, ops)
    rho = r / (1.0 - r)
    if u0 is None:
        u0 = np.repeat(-sys.min_h().max(axis=1, keepdims=True) / delta, sys.grid.size, axis=1)
    u = np.array(u0, dtype=float)
    width = np.inf
    marks = [u.copy()]
    for it in range(1, cfg.max_iterations + 1):
        nu = _gauss_seidel_step(sys, ops, u, 0.0)
        d = nu - u
        dmin, dmax = float(d.min()), float(d.max())
        lo = dmin * (rho.min() if dmin >= 0 else rho.max())
        hi = dmax * (rho.max() if dmax >= 0 else rho.min())
        width = hi - lo
        u = nu + 0.5 * (lo + hi)
        if width * delta < cfg.fp_tolerance and float(np.max(np.abs(d))) < cfg.fp_tolerance / delta:
            logger.debug("discounted system delta=%g: %d iterations", delta, it)
            return u
        if extrapolate_every and it % extrapolate_every == 0:
            marks.append(u.copy())
            if len(marks) == 3:
                d1, d0 = marks[2] - marks[1], marks[1] - marks[0]
                lam = float(np.vdot(d1, d0) / max(np.vdot(d0, d0), 1e-300))
                if 0.0 < lam < 1.0:
                    u = u + d1 * (lam / (1.0 - lam))
                marks = [u.copy()]
    raise NoConvergence(f"discounted system (delta={delta}) did not converge; bracket {width:.3e}")


@dataclass
class BetaEstimate:
    beta: float
    per_delta: dict[float, float]
    extrapolated: float
    lower_bound: float
    clamped: bool
    u_delta: np.ndarray = field(repr=False)
    delta_used: float = 0.0


def estimate_beta(sys: SystemProblem, cfg: SolverConfig, deltas=DEFAULT_DELTAS, *,
                  ref_node: int = 0, lower_bound_tol: float = 0.05, snap_tol: float = 1e-7) -> BetaEstimate:
    """Vanishing-discount estimate -delta o.u_delta(x_ref), Richardson-extrapolated to delta = 0.

    The critical value can never lie below max_x o . min_p H. An extrapolation
    that undershoots that bound by less than ``lower_bound_tol``, or exceeds it
    by at most ``snap_tol``, is set to the bound.
    """
    deltas = tuple(float(d) for d in deltas)
    if not deltas or any(d <= 0 for d in deltas) or any(b >= a for a, b in zip(deltas, deltas[1:])):
        raise ValueError("deltas must be positive and strictly decreasing")
    o = sys.o
    per, u = {}, None
    for d in deltas:
        try:
            u = solve_discounted_system(sys, cfg, d, None if u is None else u * (prev / d))
        except MaxIterationsExceeded as exc:
            raise NoConvergence(f"delta={d}: {exc}") from exc
        prev = d
        per[d] = float(-d * (o @ u[:, ref_node]))
    xs = np.array(deltas)
    ys = np.array([per[d] for d in deltas])
    if len(xs) == 1:
        extrap = float(ys[0])
    else:
        # Lagrange polynomial through all points, evaluated at 0
        extrap = float(np.polyval(np.polyfit(xs, ys, len(xs) - 1), 0.0))
    lb = sys.equilibrium_bound()
    if extrap < lb - lower_bound_tol:
        raise LowerBoundViolated(f"estimate {extrap:.6g} below the equilibrium bound {lb:.6g}; refine the grid")
    clamped = extrap < lb + snap_tol
    beta = lb if clamped else extrap
    return BetaEstimate(beta, per, extrap, lb, clamped, u, deltas[-1])


# ---------------------------------------------------------------------------
# subsolutions and sweeps


def _jacobi_step(sys: SystemProblem, ops, v: np.ndarray, beta: float) -> np.ndarray:
    return np.stack([op.apply(v[i], sys.frozen_source(v, i, beta)) for i, op in enumerate(ops)])


def subsolution_defect(sys: SystemProblem, v: np.ndarray, beta: float, cfg: SolverConfig) -> float:
    """max(v - Bv) over nodes and components; <= 0 means v is an exact discrete subsolution."""
    ops = sys.operators(cfg)
    return float(np.max(v - _jacobi_step(sys, ops, v, beta)))


def maximal_subsolution_below(sys: SystemProblem, g: np.ndarray, beta: float, cfg: SolverConfig,
                              tol: float | None = None) -> np.ndarray:
    """Largest discrete subsolution below ``g``: the limit of v <- min(v, Bv).

    Bounded below exactly when a discrete subsolution exists at ``beta``.
    """
    cfg = sys.resolve(cfg)
    ops = sys.operators(cfg)
    tol = 1e-2 * cfg.fp_tolerance if tol is None else tol
    v = np.array(g, dtype=float)
    dec = np.inf
    for _ in range(cfg.max_iterations):
        nv = np.minimum(v, _jacobi_step(sys, ops, v, beta))
        dec = float(np.max(v - nv))
        v = nv
        if dec < tol:
            return v
    raise SubsolutionConstructionFailed(
        f"lowering iteration did not settle (last decrement {dec:.3e}); beta may be subcritical")


def upwind_residuals(sys: SystemProblem, v: np.ndarray, beta: float,
                     mode: str = "max") -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Signed residuals H_i(x, D v_i) + (A v)_i - beta, shape ``(m, size)`` each.

    Returns (forward, backward, upwind). The first two use one-sided
    differences on every axis. For the upwind residual ``mode`` picks the
    slope per axis:

    * ``"max"``: whichever one-sided difference gives the larger Hamiltonian.
      Worst case; O(h) even on smooth solutions.
    * ``"godunov"``: the larger Hamiltonian among max(D-, 0) and min(D+, 0).
      This is what the monotone scheme enforces; convex kinks count as slope 0.
    """
    if mode not in ("max", "godunov"):
        raise ValueError(f"unknown mode {mode!r}")
    grid = sys.grid
    x = grid.coords()
    av = sys.coupling.apply(v)
    fwd_r, bwd_r, up_r = [], [], []
    for i, comp in enumerate(sys.components):
        fwd, bwd = one_sided_gradients(GridField(grid, v[i]))
        fwd = fwd.reshape(grid.dim, -1)
        bwd = bwd.reshape(grid.dim, -1)
        pot = comp.potential(x) + av[i] - beta
        kin = 0.5 * comp.kinetic_scale
        fwd_r.append(kin * np.sum(fwd**2, axis=0) + pot)
        bwd_r.append(kin * np.sum(bwd**2, axis=0) + pot)
        if mode == "max":
            up = np.maximum(fwd**2, bwd**2)
        else:
            up = np.maximum(np.maximum(bwd, 0.0) ** 2, np.minimum(fwd, 0.0) ** 2)
        up_r.append(kin * np.sum(up, axis=0) + pot)
    return np.array(fwd_r), np.array(bwd_r), np.array(up_r)


def residual(V: VectorField, sys: SystemProblem, beta: float) -> VectorField:
    """|H_i(x, upwind D V_i) + (A V)_i - beta| per node and component."""
    _, _, up = upwind_residuals(sys, V.stack(), beta)
    return VectorField.from_array(sys.grid, np.abs(up))


def initial_subsolution(sys: SystemProblem, beta: float, cfg: SolverConfig, *,
                        estimate: BetaEstimate | None = None, margin: float = 1.0,
                        slack_tol: float = 0.02, ref_node: int = 0) -> VectorField:
    """A discrete critical subsolution, strict where o . min_p H < beta.

    Starts from the recentred vanishing-discount solution, pushes it down by
    ``margin * (beta - o . min_p H)`` (zero at equilibria), and takes the
    largest discrete subsolution below the result. The output satisfies
    v <= Bv exactly (up to ``fp_tolerance/100``) and its upwind residual is
    checked against ``slack_tol`` (Godunov upwind residual).
    """
    cfg = sys.resolve(cfg)
    if estimate is None:
        estimate = estimate_beta(sys, cfg)
    o = sys.o
    u = estimate.u_delta - float(o @ estimate.u_delta[:, ref_node])
    gap = np.maximum(beta - o @ sys.min_h(), 0.0)
    g = u - margin * gap[None, :]
    w = maximal_subsolution_below(sys, g, beta, cfg)
    _, _, up = upwind_residuals(sys, w, beta, mode="godunov")
    worst = float(up.max())
    if worst > slack_tol:
        raise SubsolutionConstructionFailed(
            f"upwind residual {worst:.3g} exceeds slack {slack_tol}; grid too coarse for beta={beta:.6g}")
    return VectorField.from_array(sys.grid, w)


def _sweep_array(sys: SystemProblem, ops, v_prev: np.ndarray, beta: float, cfg: SolverConfig) -> np.ndarray:
    new = v_prev.copy()
    for k, op in enumerate(ops):
        f = sys.frozen_source(new, k, beta)
        try:
            new[k], _, _ = iterate_fixed_point(op, f, v_prev[k], cfg.fp_tolerance, cfg.max_iterations, cfg.accelerate)
        except MaxIterationsExceeded as exc:
            raise CriticalError(f"component {k + 1}: {exc}") from exc
    return new


def sweep(v_prev: VectorField, sys: SystemProblem, beta: float, cfg: SolverConfig) -> VectorField:
    """One pass k = 1..m: components j < k from the new iterate, j > k from the old one."""
    cfg = sys.resolve(cfg)
    return VectorField.from_array(sys.grid, _sweep_array(sys, sys.operators(cfg), v_prev.stack(), beta, cfg))


@dataclass
class AlgorithmHistory:
    iterates: list[np.ndarray]
    increments: list[float]
    min_steps: list[float]
    beta_used: float
    converged: bool
    limit: VectorField | None = None
    residual_field: VectorField | None = None
    stop_tol: float = 0.0
    fp_tolerance: float = 0.0

    @property
    def v0(self) -> np.ndarray:
        return self.iterates[0]

    @property
    def sweeps(self) -> int:
        return len(self.increments)

    @property
    def monotonicity_worst(self) -> float:
        """min over sweeps, nodes and components of v_{n+1} - v_n."""
        return min(self.min_steps) if self.min_steps else 0.0

    @property
    def growth(self) -> np.ndarray:
        """v_last - v_0, shape ``(m, size)``."""
        return self.iterates[-1] - self.iterates[0]

    @property
    def solution_residual(self) -> float:
        return float(self.residual_field.stack().max()) if self.residual_field is not None else float("nan")


def run_algorithm(sys: SystemProblem, beta: float, w0: VectorField, cfg: SolverConfig, *,
                  stop_tol: float = 1e-6, max_sweeps: int = 500, keep_iterates: bool = True) -> AlgorithmHistory:
    """Iterate :func:`sweep` from ``w0`` until the sup-norm increment drops below ``stop_tol``."""
    cfg = sys.resolve(cfg)
    ops = sys.operators(cfg)
    v = w0.stack()
    defect = subsolution_defect(sys, v, beta, cfg)
    if defect > 10 * cfg.fp_tolerance:
        logger.warning("initial field is not a discrete subsolution (defect %.2e)", defect)
    hist = AlgorithmHistory([v.copy()], [], [], float(beta), False, stop_tol=stop_tol, fp_tolerance=cfg.fp_tolerance)
    for n in range(max_sweeps):
        nv = _sweep_array(sys, ops, v, beta, cfg)
        step = nv - v
        hist.increments.append(float(np.max(np.abs(step))))
        hist.min_steps.append(float(step.min()))
        if keep_iterates:
            hist.iterates.append(nv.copy())
        else:
            hist.iterates[1:] = [nv.copy()]
        v = nv
        logger.debug("sweep %d: increment %.3e", n + 1, hist.increments[-1])
        if hist.increments[-1] < stop_tol:
            hist.converged = True
            break
    hist.limit = VectorField.from_array(sys.grid, v)
    hist.residual_field = residual(hist.limit, sys, beta)
    if not hist.converged:
        raise NotConverged(f"no convergence after {max_sweeps} sweeps (increment {hist.increments[-1]:.3e})", hist)
    return hist
