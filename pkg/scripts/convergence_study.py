"""Grid refinement on the cosine problem: solution residual and intrinsic distance error vs n.

Writes two-column files (n, value) for plotting next to a printed table.
"""

import argparse
from pathlib import Path

import numpy as np

from hjsystems.core import TorusGrid
from hjsystems.eikonal import EffectiveHamiltonian, IntrinsicMetricGraph, intrinsic_distance
from hjsystems.pipeline import run_problem
from hjsystems.problem import load_problem

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sizes", type=int, nargs="+", default=[64, 128, 256, 512])
    ap.add_argument("--out", type=Path, default=ROOT / "runs" / "convergence")
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)

    base = load_problem(ROOT / "problems" / "cosine-scalar.json")
    comp = base.system.components[0]
    rows = []
    for n in args.sizes:
        res = run_problem(base.with_grid(n))
        metric = IntrinsicMetricGraph.build(EffectiveHamiltonian.unshifted(comp, TorusGrid(1, n)), 1.0)
        dist_err = abs(intrinsic_distance(metric, 0).flat[n // 2] - 2 / np.pi)
        rows.append((n, res.beta, res.history.solution_residual, dist_err))

    print(f"{'n':>6}{'beta':>12}{'residual':>12}{'ratio':>8}{'|S - 2/pi|':>14}")
    prev = None
    for n, beta, r, e in rows:
        ratio = f"{prev / r:8.3f}" if prev else " " * 8
        print(f"{n:>6}{beta:>12.6f}{r:>12.4g}{ratio}{e:>14.3e}")
        prev = r
    arr = np.array(rows)
    np.savetxt(args.out / "residual.dat", arr[:, [0, 2]], header="n residual")
    np.savetxt(args.out / "distance_error.dat", arr[:, [0, 3]], header="n error")


if __name__ == "__main__":
    main()
