"""Acceptance criteria, one test each; the terminal summary prints a PASS/FAIL line per criterion."""

import time
from dataclasses import replace

import numpy as np
import pytest
from threadpoolctl import threadpool_limits

from hjsystems.core import GridField, TorusGrid
from hjsystems.aubry import classify_isolated, rigidity_check
from hjsystems.coupling import equilibrium_distribution, validate
from hjsystems.critical import initial_subsolution, run_algorithm
from hjsystems.diagnostics import superdifferential_probe
from hjsystems.discounted import DiscountedProblem, SolverConfig, extract_trajectory, solve_discounted
from hjsystems.eikonal import (
    EffectiveHamiltonian,
    IntrinsicMetricGraph,
    intrinsic_distance,
    maximal_subsolution,
    scalar_critical_value,
)
from hjsystems.hamiltonian import eval_h, eval_lagrangian, support_function
from hjsystems.pipeline import run_problem, trace
from hjsystems.problem import load_problem

from conftest import PROBLEMS, cosine, random_coupling, record_criterion, reference_run

pytestmark = pytest.mark.slow

REFERENCE = ["flat", "cosine-scalar", "symmetric-2x2", "two-well", "mixed-2x2", "cosine-2d"]
SYSTEMS = ["cosine-scalar", "symmetric-2x2", "two-well", "mixed-2x2"]
DISCOUNTED_M2 = ["symmetric-2x2", "two-well", "mixed-2x2"]
N_SAMPLES = 10_000
ALG_TOL = 1e-10


def test_criterion_01_scalar_critical_value():
    prob = load_problem(PROBLEMS / "cosine-scalar.json")
    with threadpool_limits(limits=1):
        t0 = time.perf_counter()
        res = run_problem(prob)
        elapsed = time.perf_counter() - t0
    err = abs(res.beta - 1.0)
    record_criterion(1, err <= 0.05 and elapsed <= 60,
                     f"|beta - 1| = {err:.2e} (<= 0.05), runtime {elapsed:.1f} s (<= 60 s, 1 thread)")


def test_criterion_02_diagonal_reduction():
    sym, sca = reference_run("symmetric-2x2"), reference_run("cosine-scalar")
    db = abs(sym.beta - sca.beta)
    u = sym.limit.stack()
    du = float(np.max(np.abs(u[0] - u[1])))
    record_criterion(2, db <= 0.01 and du <= 1e-4,
                     f"|beta_sys - beta_scalar| = {db:.2e} (<= 0.01), |u1 - u2|_inf = {du:.2e} (<= 1e-4)")


def test_criterion_03_monotonicity():
    worst = {name: reference_run(name).history.monotonicity_worst for name in REFERENCE}
    fp = {name: reference_run(name).history.fp_tolerance for name in REFERENCE}
    ok = all(worst[k] >= -10 * fp[k] for k in REFERENCE)
    name = min(worst, key=worst.get)
    record_criterion(3, ok, f"min (v_n+1 - v_n) = {worst[name]:.2e} on {name} (>= -10 fp_tol)")


def test_criterion_04_pinning():
    devs = {}
    for name in REFERENCE:
        res = reference_run(name)
        nodes = np.asarray(res.equilibria.nodes, dtype=int)
        assert nodes.size > 0, name
        devs[name] = (float(np.abs(res.history.growth[:, nodes]).max()), 50 * res.history.stop_tol)
    ok = all(d <= tol for d, tol in devs.values())
    name = max(devs, key=lambda k: devs[k][0])
    record_criterion(4, ok, f"max |V - v0| on equilibria = {devs[name][0]:.2e} on {name} (<= 50 stop_tol)")


def test_criterion_05_residual_convergence():
    r256 = reference_run("cosine-scalar").history.solution_residual
    r128 = reference_run("cosine-scalar", 128).history.solution_residual
    ratio = r128 / r256
    record_criterion(5, r256 <= 0.05 and ratio >= 1.7,
                     f"residual(256) = {r256:.4f} (<= 0.05), residual(128)/residual(256) = {ratio:.3f} (>= 1.7)")


def test_criterion_06_comparison():
    worst_dom, worst_eq = np.inf, 0.0
    ok = True
    for name in REFERENCE:
        res = reference_run(name)
        h = res.history
        nodes = np.asarray(res.equilibria.nodes, dtype=int)
        for before, after in zip(h.iterates[:-1], h.iterates[1:]):
            step = after - before
            worst_dom = min(worst_dom, float(step.min()))
            worst_eq = max(worst_eq, float(np.abs(step[:, nodes]).max()))
            ok &= step.min() >= -10 * h.fp_tolerance and np.abs(step[:, nodes]).max() <= 50 * h.stop_tol
    record_criterion(6, bool(ok), f"worst sweep step {worst_dom:.2e} (>= -10 fp_tol), "
                                  f"worst equilibrium step {worst_eq:.2e} (<= 50 stop_tol)")


def test_criterion_07_effective_critical_value():
    worst, where = 0.0, ""
    for name in REFERENCE:
        res = reference_run(name)
        sys = res.problem.system
        eff_max = np.max(sys.min_h() + sys.coupling.apply(res.limit.stack()), axis=1)
        gap = float(np.abs(eff_max - res.beta).max())
        if gap >= worst:
            worst, where = gap, name
    record_criterion(7, worst <= 0.02, f"max_i |max_x (V_i + (AV)_i) - beta| = {worst:.2e} on {where} (<= 0.02)")


def _second_limit(res, margin):
    prob = res.problem
    sys, alg = prob.system, prob.algorithm
    cfg = sys.resolve(prob.solver)
    w0 = initial_subsolution(sys, res.beta, cfg, estimate=res.estimate, margin=margin, slack_tol=alg.slack_tol)
    hist = run_algorithm(sys, res.beta, w0, cfg, stop_tol=alg.stop_tol, max_sweeps=alg.max_sweeps)
    return w0, hist.limit


def test_criterion_08_rigidity():
    worst, starts, ok = 0.0, [], True
    for name in SYSTEMS:
        res = reference_run(name)
        w0, limit = _second_limit(res, margin=0.25)
        starts.append(float(np.abs(w0.stack() - res.history.v0).max()))
        rep = rigidity_check(res.limit, limit, res.aubry, tol=np.inf)
        worst = max(worst, rep.worst_deviation)
        ok &= rep.worst_deviation <= 0.02
    record_criterion(8, bool(ok), f"max deviation from k*1 on the mask = {worst:.2e} (<= 0.02); "
                                  f"initial subsolutions differ by >= {min(starts):.2e}")


def test_criterion_09_intrinsic_distance():
    grid = TorusGrid(1, 512)
    metric = IntrinsicMetricGraph.build(EffectiveHamiltonian.unshifted(cosine(), grid), 1.0)
    err = abs(intrinsic_distance(metric, 0).flat[256] - 2 / np.pi)
    rng = np.random.default_rng(0)
    x, y, z = rng.integers(0, grid.size, (3, 1000))
    full = metric.distances(np.arange(grid.size))
    excess = float(np.max(full[x, z] - full[x, y] - full[y, z]))
    record_criterion(9, err <= 0.02 and excess <= 1e-12,
                     f"|S_c(0, 0.5) - 2/pi| = {err:.2e} (<= 0.02), triangle excess {excess:.1e} on 1000 triples")


def test_criterion_10_maximal_subsolution():
    res = reference_run("cosine-scalar")
    sys = res.problem.system
    eff = EffectiveHamiltonian.unshifted(sys.components[0], sys.grid)
    metric = IntrinsicMetricGraph.build(eff, scalar_critical_value(eff))
    u = maximal_subsolution(metric, [0], [0.0]).flat
    limit = res.limit[0].flat - res.limit[0].flat[0]
    err = float(np.abs(u - limit).max())
    record_criterion(10, err <= 0.03, f"|maximal subsolution - recentred limit|_inf = {err:.2e} (<= 0.03)")


def _random_start_gaps(rng, k=10, dt=0.05, horizon=20.0):
    gaps = []
    # the discounted cosine problem a = 1, f = 1
    grid = TorusGrid(1, 256)
    prob = DiscountedProblem(cosine(), 1.0, GridField.constant(grid, 1.0))
    cfg = SolverConfig(dt=dt)
    v = solve_discounted(prob, cfg)
    gaps += [extract_trajectory(v, prob, cfg, x0, horizon).value_gap for x0 in rng.random(k)]
    # frozen components of the coupled reference problems, discount a_ii = 1
    for name in DISCOUNTED_M2:
        res = reference_run(name)
        cfg = replace(res.problem.system.resolve(res.problem.solver), dt=dt)
        for i in range(res.problem.system.m):
            gaps += [trace(res.problem, res.limit, res.beta, x0, horizon, component=i, cfg=cfg).value_gap
                     for x0 in rng.random(k)]
    return np.array(gaps)


def _aubry_excursion(name, dt=0.05, horizon=20.0):
    res = reference_run(name)
    grid = res.problem.system.grid
    cfg = replace(res.problem.system.resolve(res.problem.solver), dt=dt)
    mask_x = grid.coords()[res.aubry.nodes]
    worst = 0.0
    for node in res.aubry.nodes:
        for i in range(res.problem.system.m):
            traj = trace(res.problem, res.limit, res.beta, grid.coords()[node], horizon, component=i, cfg=cfg)
            d = np.abs(np.mod(traj.points[:, None, :] - mask_x[None] + 0.5, 1.0) - 0.5).max(axis=-1).min(axis=1)
            worst = max(worst, float(d.max()) / grid.h)
    return worst


def test_criterion_11_trajectories():
    gaps = _random_start_gaps(np.random.default_rng(11))
    excursion = max(_aubry_excursion(name) for name in ("cosine-scalar", "symmetric-2x2"))
    record_criterion(11, gaps.max() <= 1e-2 and excursion <= 2,
                     f"max value gap {gaps.max():.2e} over {gaps.size} random starts (<= 1e-2), "
                     f"max distance from the mask {excursion:.2f} h (<= 2 h), T = 20")


def test_criterion_12_isolated_points():
    found, ok = 0, True
    for name in ("cosine-scalar", "two-well"):
        res = reference_run(name)
        rep = classify_isolated(res.aubry, res.equilibria)
        found += len(rep.isolated)
        ok &= rep.passed and len(rep.isolated) > 0
    record_criterion(12, bool(ok), f"{found} isolated mask nodes, all detected equilibria")


def test_criterion_13_semiconcavity_probe():
    grid = TorusGrid(1, 256)
    smooth = GridField.from_function(grid, lambda x: np.exp(np.cos(2 * np.pi * x[:, 0])))
    kink = GridField.from_function(grid, lambda x: np.abs(x[:, 0] - 0.5))
    calib = superdifferential_probe(smooth, 37).passed and not superdifferential_probe(kink, 128).passed
    rng = np.random.default_rng(13)
    sol_total = sol_pass = it_total = it_pass = 0
    for name in SYSTEMS:
        res = reference_run(name)
        g = res.problem.system.grid
        for comp in res.limit.components:
            for node in rng.choice(g.size, 20, replace=False):
                sol_total += 1
                sol_pass += superdifferential_probe(comp, int(node)).passed
        for it in res.history.iterates:
            for row in it:
                field = GridField(g, row)
                for node in res.aubry.nodes:
                    it_total += 1
                    it_pass += superdifferential_probe(field, int(node)).passed
    ok = calib and sol_pass == sol_total and it_pass == it_total
    record_criterion(13, ok, f"calibration {'ok' if calib else 'broken'}, solutions {sol_pass}/{sol_total}, "
                             f"iterates on the mask {it_pass}/{it_total}")


def test_criterion_14_algebraic_properties():
    rng = np.random.default_rng(14)
    worst = {}
    comp = cosine(amplitude=0.7)
    comp = replace(comp, kinetic_scale=1.7)
    x = rng.random(N_SAMPLES)
    p = rng.normal(0, 3, N_SAMPLES)
    q = rng.normal(0, 3, N_SAMPLES)
    fy = eval_h(comp, x, p) + eval_lagrangian(comp, x, q) - p * q
    tight = eval_h(comp, x, p) + eval_lagrangian(comp, x, comp.kinetic_scale * p) - comp.kinetic_scale * p * p
    worst["fenchel-young"] = max(-float(fy.min()), float(np.abs(tight).max()))
    a = comp.potential(x) + rng.exponential(1.0, N_SAMPLES)
    level = float(a.max())
    eiko = support_function(comp, level, x, q) - eval_lagrangian(comp, x, q) - level
    worst["eiko1"] = max(0.0, float(eiko.max()))
    lam = rng.uniform(0, 10, N_SAMPLES)
    hom = support_function(comp, level, x, lam * q) - lam * support_function(comp, level, x, q)
    worst["homogeneity"] = float(np.abs(hom).max() / max(1.0, np.abs(lam * q).max()))
    o_err = 0.0
    for _ in range(N_SAMPLES):
        m = int(rng.integers(1, 6))
        c = validate(random_coupling(rng, m, rng.uniform(0.2, 1.0)) if m > 1 else [[0.0]])
        o = equilibrium_distribution(c)
        o_err = max(o_err, float(np.abs(o @ c.entries).max()), abs(float(o.sum()) - 1), -float(o.min()))
    worst["o-conditions"] = o_err
    ok = all(v <= ALG_TOL for v in worst.values())
    record_criterion(14, ok, ", ".join(f"{k} {v:.1e}" for k, v in worst.items()) + f" (<= {ALG_TOL:g}, 1e4 samples each)")
