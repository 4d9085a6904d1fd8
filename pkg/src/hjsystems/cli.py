"""Command line interface: ``hjsys validate | run | trace | report``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from contextlib import nullcontext
from pathlib import Path

import numpy as np

from .core import HJSystemsError
from .coupling import CouplingError
from .critical import CriticalError, NoConvergence, NotConverged
from .discounted import MaxIterationsExceeded
from .problem import ParseError, load_problem

EXIT_OK, EXIT_VALIDATION, EXIT_CONVERGENCE, EXIT_INTERNAL = 0, 2, 3, 4
THREADS_ENV = "HJSYS_THREADS"

log = logging.getLogger("hjsystems")


def _thread_limit():
    raw = os.environ.get(THREADS_ENV)
    if not raw:
        return nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=int(raw))


def _load(args):
    prob = load_problem(args.problem)
    if getattr(args, "n", None):
        prob = prob.with_grid(args.n)
    return prob


def cmd_validate(args) -> int:
    prob = _load(args)
    sysp = prob.system
    print(f"grid: dim={sysp.grid.dim} n={sysp.grid.n}  components: {sysp.m}")
    print("o = (" + ", ".join(f"{x:.6g}" for x in sysp.o) + ")")
    print(f"equilibrium lower bound for beta: {sysp.equilibrium_bound():.6g}")
    return EXIT_OK


def _summary(report: dict) -> str:
    b = report["beta_estimate"]
    lines = [
        f"problem: {report.get('name') or '-'}  grid n={report['grid']['n']} dim={report['grid']['dim']}  m={report['m']}",
        f"beta = {b['beta']:.10g} ({b['source']}, lower bound {b['lower_bound']:.6g})",
    ]
    for row in b["per_delta"]:
        lines.append(f"  delta={row['delta']:<8g} beta={row['beta']:.10g}")
    lines += [
        f"sweeps: {report['sweeps_used']}  worst step: {report['monotonicity_worst']:.3e}",
        f"residual max: " + ", ".join(f"{r:.4g}" for r in report["residual_max"]),
        f"pinned nodes: {len(report['pinning_mask'])}  equilibria: {len(report['equilibria'])}"
        f"  isolated: {report['isolated_nodes']}",
        f"rigidity: k={report['rigidity']['k']:.3g} deviation={report['rigidity']['worst_deviation']:.3e}",
    ]
    for i, e in enumerate(report["eikonal"]):
        lines.append(f"component {i + 1}: effective critical value {e['critical_value']:.6g}"
                     f" (gap {e['gap_to_beta']:+.2e}), meets mask: {e['meets_mask']}")
    for i, d in enumerate(report["diagnostics"]):
        lines.append(f"component {i + 1}: lipschitz {d['lipschitz']:.4g},"
                     f" superdifferential pass rate {d['superdiff_pass_rate']:.0%}")
    return "\n".join(lines)


def cmd_run(args) -> int:
    from .pipeline import run_problem, write_artifacts

    prob = _load(args)
    res = run_problem(prob, beta=args.beta)
    write_artifacts(res, Path(args.out))
    print(_summary(res.report))
    return EXIT_OK


def cmd_trace(args) -> int:
    from .pipeline import load_fields, run_problem, trace

    prob = _load(args)
    if args.fields and (Path(args.fields) / "fields.dat").exists():
        V, beta = load_fields(Path(args.fields), prob)
    else:
        res = run_problem(prob)
        V, beta = res.limit, res.beta
    x0 = np.array([float(c) for c in args.x0.split(",")])
    if x0.size != prob.system.grid.dim:
        raise ParseError("--x0", f"expected {prob.system.grid.dim} comma-separated coordinates")
    traj = trace(prob, V, beta, x0, args.horizon, component=args.component - 1)
    d = prob.system.grid.dim
    rows = np.column_stack([traj.times, traj.points, traj.velocities, traj.accumulated_cost])
    head = " ".join(["t"] + [f"x{a + 1}" for a in range(d)] + [f"q{a + 1}" for a in range(d)] + ["cost"])
    out = sys.stdout if args.out in (None, "-") else open(args.out, "w")
    try:
        np.savetxt(out, rows, fmt="%.10e", header=head)
    finally:
        if out is not sys.stdout:
            out.close()
    print(f"value gap: {traj.value_gap:.3e}", file=sys.stderr)
    return EXIT_OK


def cmd_report(args) -> int:
    report = json.loads((Path(args.dir) / "report.json").read_text())
    print(_summary(report))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hjsys", description="Weakly coupled Hamilton-Jacobi systems on the torus")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("validate", help="parse a problem file and check the coupling")
    v.add_argument("problem")
    v.set_defaults(func=cmd_validate)

    r = sub.add_parser("run", help="compute beta, the critical solution and all audits")
    r.add_argument("problem")
    r.add_argument("--out", required=True, help="output directory")
    r.add_argument("--beta", type=float, help="skip the estimate and use this level")
    r.add_argument("--n", type=int, help="override grid.n")
    r.set_defaults(func=cmd_run)

    t = sub.add_parser("trace", help="follow an optimal curve backwards from a point")
    t.add_argument("problem")
    t.add_argument("--x0", required=True, help="comma-separated coordinates")
    t.add_argument("--horizon", type=float, required=True)
    t.add_argument("--fields", help="run directory with fields.dat; solved from scratch if absent")
    t.add_argument("--component", type=int, default=1, help="1-based component index")
    t.add_argument("--n", type=int, help="override grid.n")
    t.add_argument("--out", help="trajectory file (default: stdout)")
    t.set_defaults(func=cmd_trace)

    rep = sub.add_parser("report", help="print the summary of a finished run")
    rep.add_argument("dir")
    rep.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        with _thread_limit():
            return args.func(args)
    except (ParseError, CouplingError) as exc:
        print(f"error [{exc.module}] {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (NotConverged, NoConvergence, MaxIterationsExceeded, CriticalError) as exc:
        print(f"error [{exc.module}] {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except HJSystemsError as exc:
        print(f"error [{exc.module}] {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # noqa: BLE001
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
