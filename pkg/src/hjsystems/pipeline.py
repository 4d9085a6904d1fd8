"""End-to-end run: beta, initial subsolution, sweeps, Aubry estimate, cross-checks."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .aubry import (
    AubryEstimate,
    EquilibriumList,
    RigidityViolated,
    classify_isolated,
    detect_equilibria,
    estimate_from_pinning,
    rigidity_check,
)
from .core import GridField, VectorField
from .critical import AlgorithmHistory, BetaEstimate, estimate_beta, initial_subsolution, run_algorithm
from .diagnostics import lipschitz_estimate, strict_differentiability_probe, superdifferential_probe
from .discounted import DiscountedProblem, Trajectory, extract_trajectory, solve_discounted
from .eikonal import EffectiveHamiltonian, scalar_aubry, scalar_critical_value
from .problem import ProblemFile

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
PROBE_NODES = 20


@dataclass
class RunResult:
    problem: ProblemFile
    beta: float
    estimate: BetaEstimate | None
    history: AlgorithmHistory
    equilibria: EquilibriumList
    aubry: AubryEstimate
    report: dict = field(default_factory=dict)

    @property
    def limit(self) -> VectorField:
        return self.history.limit


def _floats(a) -> list[float]:
    return [float(x) for x in np.asarray(a).ravel()]


def _ints(a) -> list[int]:
    return [int(x) for x in np.asarray(a).ravel()]


def run_problem(problem: ProblemFile, beta: float | None = None) -> RunResult:
    sys, alg = problem.system, problem.algorithm
    cfg = sys.resolve(problem.solver)
    beta = alg.beta if beta is None else beta
    est = None
    if beta is None:
        est = estimate_beta(sys, cfg, alg.deltas)
        beta = est.beta
    logger.info("beta = %.10g", beta)
    w0 = initial_subsolution(sys, beta, cfg, estimate=est, slack_tol=alg.slack_tol)
    hist = run_algorithm(sys, beta, w0, cfg, stop_tol=alg.stop_tol, max_sweeps=alg.max_sweeps)
    eq = detect_equilibria(sys, beta, alg.equilibrium_tol)
    aub = estimate_from_pinning(hist, sys.grid, alg.pin_tol, equilibria=eq)
    result = RunResult(problem, float(beta), est, hist, eq, aub)
    result.report = build_report(result, cfg)
    return result


def build_report(res: RunResult, cfg) -> dict:
    sys, alg, hist = res.problem.system, res.problem.algorithm, res.history
    limit = hist.limit.stack()
    iso = classify_isolated(res.aubry, res.equilibria)
    try:
        rig = rigidity_check(hist.limit, VectorField.from_array(sys.grid, hist.v0), res.aubry, tol=0.02)
        rigidity = {"k": rig.k, "worst_deviation": rig.worst_deviation, "passed": True}
    except RigidityViolated as exc:
        rigidity = {"k": exc.k, "worst_deviation": exc.deviation, "passed": False}
    shifts = sys.coupling.apply(limit)
    eikonal = []
    for i, comp in enumerate(sys.components):
        eff = EffectiveHamiltonian(comp, GridField(sys.grid, shifts[i]))
        c = scalar_critical_value(eff)
        nodes = scalar_aubry(eff, c, alg.equilibrium_tol)
        eikonal.append({"critical_value": c, "gap_to_beta": c - res.beta,
                        "aubry_nodes": len(nodes), "meets_mask": bool(res.aubry.mask[nodes].any())})
    rng = np.random.default_rng(alg.seed)
    probe = rng.choice(sys.grid.size, size=min(PROBE_NODES, sys.grid.size), replace=False)
    diags = []
    for i in range(sys.m):
        f = hist.limit[i]
        lip = lipschitz_estimate(f).value
        sd = [superdifferential_probe(f, int(k), lip=lip).passed for k in probe]
        strict = [strict_differentiability_probe(f, k, lip=lip).passed for k in iso.isolated]
        diags.append({"lipschitz": lip,
                      "lipschitz_iterates": max(lipschitz_estimate(GridField(sys.grid, v[i])).value
                                                for v in hist.iterates),
                      "superdiff_pass_rate": float(np.mean(sd)),
                      "strict_diff_isolated_pass": bool(all(strict))})
    est = res.estimate
    return {
        "schema_version": SCHEMA_VERSION,
        "name": res.problem.name,
        "grid": {"dim": sys.grid.dim, "n": sys.grid.n},
        "m": sys.m,
        "equilibrium_distribution": _floats(sys.o),
        "solver": {"dt": cfg.dt, "speed_bound": cfg.speed_bound, "candidates_per_axis": cfg.candidates_per_axis,
                   "fp_tolerance": cfg.fp_tolerance},
        "beta_estimate": {
            "beta": res.beta,
            "source": "explicit" if est is None else "vanishing_discount",
            "per_delta": [] if est is None else [{"delta": d, "beta": b} for d, b in est.per_delta.items()],
            "extrapolated": None if est is None else est.extrapolated,
            "lower_bound": sys.equilibrium_bound(),
            "clamped": False if est is None else est.clamped,
        },
        "sweeps_used": hist.sweeps,
        "increments": hist.increments,
        "monotonicity_worst": hist.monotonicity_worst,
        "pinning_mask": _ints(res.aubry.nodes),
        "pin_tol": res.aubry.pin_tol,
        "equilibria": _ints(res.equilibria.nodes),
        "isolated_nodes": iso.isolated,
        "isolated_violations": iso.violations,
        "residual_max": _floats(hist.residual_field.stack().max(axis=1)),
        "rigidity": rigidity,
        "eikonal": eikonal,
        "diagnostics": diags,
        "seed": alg.seed,
    }


def write_artifacts(res: RunResult, out: Path) -> None:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    sys = res.problem.system
    x = sys.grid.coords()
    limit = res.limit.stack()
    cols = np.column_stack([x, limit.T])
    head = " ".join([f"x{a + 1}" for a in range(sys.grid.dim)] + [f"u{i + 1}" for i in range(sys.m)])
    np.savetxt(out / "fields.dat", cols, fmt="%.12e", header=head)
    hist = np.column_stack([np.arange(1, res.history.sweeps + 1), res.history.increments])
    np.savetxt(out / "history.dat", hist, fmt=["%d", "%.12e"], header="sweep sup_increment")
    growth = res.history.growth
    resid = res.history.residual_field.stack()
    for i in range(sys.m):
        for tag, vals in (("u", limit[i]), ("growth", growth[i]), ("residual", resid[i])):
            np.savetxt(out / f"{tag}{i + 1}.dat", np.column_stack([x, vals]), fmt="%.12e")
    (out / "report.json").write_text(json.dumps(res.report, indent=2, sort_keys=True) + "\n")


def load_fields(out: Path, problem: ProblemFile) -> tuple[VectorField, float]:
    """Read back ``fields.dat`` and the beta of ``report.json`` from a run directory."""
    out = Path(out)
    report = json.loads((out / "report.json").read_text())
    data = np.loadtxt(out / "fields.dat", ndmin=2)
    grid = problem.system.grid
    if report["grid"] != {"dim": grid.dim, "n": grid.n}:
        raise ValueError("run directory was produced on a different grid")
    return VectorField.from_array(grid, data[:, grid.dim:].T), float(report["beta_estimate"]["beta"])


def trace(problem: ProblemFile, V: VectorField, beta: float, x0, horizon: float,
          component: int = 0, cfg=None) -> Trajectory:
    """Greedy optimal curve of the frozen ``component`` problem built on the critical solution ``V``."""
    sys = problem.system
    cfg = sys.resolve(problem.solver if cfg is None else cfg)
    src = GridField(sys.grid, sys.frozen_source(V.stack(), component, beta))
    prob = DiscountedProblem(sys.components[component], float(sys.coupling.diagonal[component]), src, component)
    v = solve_discounted(prob, cfg, V[component])
    return extract_trajectory(v, prob, cfg, x0, horizon)
