"""Run every shipped problem file and write its artifacts under one output directory."""

import argparse
import time
from pathlib import Path

from hjsystems.pipeline import run_problem, write_artifacts
from hjsystems.problem import load_problem

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--problems", type=Path, default=ROOT / "problems")
    ap.add_argument("--out", type=Path, default=ROOT / "runs")
    ap.add_argument("--skip", nargs="*", default=[], help="problem names to leave out (e.g. cosine-2d)")
    args = ap.parse_args()

    print(f"{'problem':<16}{'beta':>12}{'sweeps':>8}{'residual':>12}{'mask':>6}{'seconds':>9}")
    for path in sorted(args.problems.glob("*.json")):
        prob = load_problem(path)
        if prob.name in args.skip:
            continue
        t0 = time.perf_counter()
        res = run_problem(prob)
        elapsed = time.perf_counter() - t0
        write_artifacts(res, args.out / prob.name)
        print(f"{prob.name:<16}{res.beta:>12.6f}{res.history.sweeps:>8d}"
              f"{res.history.solution_residual:>12.4g}{res.aubry.nodes.size:>6d}{elapsed:>9.1f}")


if __name__ == "__main__":
    main()
