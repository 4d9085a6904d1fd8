"""JSON problem files: strict parsing into solver objects.

Schema (optional keys in brackets)::

    {
      ["name": str],
      "grid": {"dim": 1 | 2, "n": int},
      "components": [
        {["kinetic_scale": float = 1],
         "potential": {["constant": float = 0],
                       ["modes": [{"wavevector": [int, ...], "amplitude": float, ["phase": float = 0]}]]}}
      ],
      "coupling": [[float, ...], ...],
      ["solver": {["dt": float | "auto"], ["speed_bound": float | "auto"],
                  ["candidates_per_axis": int | "auto"], ["fp_tolerance": float], ["max_iterations": int]}],
      ["algorithm": {["stop_tol": float], ["max_sweeps": int], ["beta": float | "auto"],
                     ["deltas": [float, ...]], ["equilibrium_tol": float], ["pin_tol": float | "auto"],
                     ["slack_tol": float], ["seed": int]}]
    }

Unknown keys anywhere are rejected.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

from .core import HJSystemsError, TorusGrid
from .coupling import validate
from .critical import DEFAULT_DELTAS, SystemProblem
from .discounted import SolverConfig
from .hamiltonian import HamiltonianComponent, Mode, TrigPotential


class ParseError(HJSystemsError):
    module = "problem"

    def __init__(self, path: str, msg: str):
        super().__init__(f"{path or '<root>'}: {msg}")
        self.path = path


@dataclass(frozen=True)
class AlgorithmConfig:
    stop_tol: float = 1e-6
    max_sweeps: int = 500
    beta: float | None = None
    deltas: tuple[float, ...] = DEFAULT_DELTAS
    equilibrium_tol: float = 1e-6
    pin_tol: float | None = None
    slack_tol: float = 0.02
    seed: int = 0


@dataclass(frozen=True)
class ProblemFile:
    system: SystemProblem
    solver: SolverConfig = field(default_factory=SolverConfig)
    algorithm: AlgorithmConfig = field(default_factory=AlgorithmConfig)
    name: str = ""

    def with_grid(self, n: int) -> ProblemFile:
        grid = TorusGrid(self.system.grid.dim, n)
        return replace(self, system=SystemProblem(grid, self.system.components, self.system.coupling))


def _join(path: str, key) -> str:
    if isinstance(key, int):
        return f"{path}[{key}]"
    return f"{path}.{key}" if path else key


def _obj(doc, path: str, required: set[str], optional: set[str]) -> dict:
    if not isinstance(doc, dict):
        raise ParseError(path, "expected an object")
    unknown = set(doc) - required - optional
    if unknown:
        raise ParseError(_join(path, sorted(unknown)[0]), "unknown key")
    for key in sorted(required):
        if key not in doc:
            raise ParseError(_join(path, key), "missing required key")
    return doc


def _num(val, path: str, *, integer: bool = False, positive: bool = False) -> float | int:
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ParseError(path, "expected a number")
    if not math.isfinite(val):
        raise ParseError(path, "must be finite")
    if integer:
        if isinstance(val, float) and not val.is_integer():
            raise ParseError(path, "expected an integer")
        val = int(val)
    if positive and not val > 0:
        raise ParseError(path, "must be positive")
    return val


def _auto(val, path: str, **kw):
    return None if val == "auto" else _num(val, path, **kw)


def _list(val, path: str) -> list:
    if not isinstance(val, list):
        raise ParseError(path, "expected an array")
    return val


def _potential(doc, path: str, dim: int) -> TrigPotential:
    doc = _obj(doc, path, set(), {"constant", "modes"})
    modes = []
    for k, m in enumerate(_list(doc.get("modes", []), _join(path, "modes"))):
        mp = _join(_join(path, "modes"), k)
        m = _obj(m, mp, {"wavevector", "amplitude"}, {"phase"})
        wv = tuple(_num(c, _join(_join(mp, "wavevector"), j), integer=True)
                   for j, c in enumerate(_list(m["wavevector"], _join(mp, "wavevector"))))
        if len(wv) != dim:
            raise ParseError(_join(mp, "wavevector"), f"expected {dim} entries")
        modes.append(Mode(wv, float(_num(m["amplitude"], _join(mp, "amplitude"))),
                          float(_num(m.get("phase", 0.0), _join(mp, "phase")))))
    return TrigPotential(float(_num(doc.get("constant", 0.0), _join(path, "constant"))), tuple(modes), dim)


def _solver(doc, path: str) -> SolverConfig:
    doc = _obj(doc, path, set(), {"dt", "speed_bound", "candidates_per_axis", "fp_tolerance", "max_iterations"})
    kw: dict[str, Any] = {}
    for key in ("dt", "speed_bound"):
        if key in doc:
            kw[key] = _auto(doc[key], _join(path, key), positive=True)
    if "candidates_per_axis" in doc:
        c = _auto(doc["candidates_per_axis"], _join(path, "candidates_per_axis"), integer=True, positive=True)
        if c is not None and c % 2 == 0:
            raise ParseError(_join(path, "candidates_per_axis"), "must be odd")
        kw["candidates_per_axis"] = c
    if "fp_tolerance" in doc:
        kw["fp_tolerance"] = _num(doc["fp_tolerance"], _join(path, "fp_tolerance"), positive=True)
    if "max_iterations" in doc:
        kw["max_iterations"] = _num(doc["max_iterations"], _join(path, "max_iterations"), integer=True, positive=True)
    return SolverConfig(**kw)


def _algorithm(doc, path: str) -> AlgorithmConfig:
    keys = {"stop_tol", "max_sweeps", "beta", "deltas", "equilibrium_tol", "pin_tol", "slack_tol", "seed"}
    doc = _obj(doc, path, set(), keys)
    kw: dict[str, Any] = {}
    for key in ("stop_tol", "equilibrium_tol", "slack_tol"):
        if key in doc:
            kw[key] = float(_num(doc[key], _join(path, key), positive=True))
    if "max_sweeps" in doc:
        kw["max_sweeps"] = _num(doc["max_sweeps"], _join(path, "max_sweeps"), integer=True, positive=True)
    if "seed" in doc:
        kw["seed"] = _num(doc["seed"], _join(path, "seed"), integer=True)
    if "beta" in doc:
        kw["beta"] = _auto(doc["beta"], _join(path, "beta"))
    if "pin_tol" in doc:
        kw["pin_tol"] = _auto(doc["pin_tol"], _join(path, "pin_tol"), positive=True)
    if "deltas" in doc:
        dp = _join(path, "deltas")
        ds = tuple(float(_num(d, _join(dp, k), positive=True)) for k, d in enumerate(_list(doc["deltas"], dp)))
        if not ds or any(b >= a for a, b in zip(ds, ds[1:])):
            raise ParseError(dp, "must be non-empty and strictly decreasing")
        kw["deltas"] = ds
    return AlgorithmConfig(**kw)


def parse_problem(doc) -> ProblemFile:
    """Build a problem from a decoded JSON document. Coupling axioms are checked too."""
    doc = _obj(doc, "", {"grid", "components", "coupling"}, {"name", "solver", "algorithm"})
    g = _obj(doc["grid"], "grid", {"dim", "n"}, set())
    dim = _num(g["dim"], "grid.dim", integer=True)
    if dim not in (1, 2):
        raise ParseError("grid.dim", "must be 1 or 2")
    n = _num(g["n"], "grid.n", integer=True)
    if n < 8:
        raise ParseError("grid.n", "must be at least 8")
    grid = TorusGrid(dim, n)
    comps = []
    for i, c in enumerate(_list(doc["components"], "components")):
        cp = _join("components", i)
        c = _obj(c, cp, {"potential"}, {"kinetic_scale"})
        pot = _potential(c["potential"], _join(cp, "potential"), dim)
        scale = float(_num(c.get("kinetic_scale", 1.0), _join(cp, "kinetic_scale"), positive=True))
        comps.append(HamiltonianComponent(pot, scale))
    if not comps:
        raise ParseError("components", "at least one component is required")
    rows = _list(doc["coupling"], "coupling")
    entries = [[float(_num(a, f"coupling[{i}][{j}]")) for j, a in enumerate(_list(r, f"coupling[{i}]"))]
               for i, r in enumerate(rows)]
    if len(entries) != len(comps) or any(len(r) != len(comps) for r in entries):
        raise ParseError("coupling", f"expected a {len(comps)}x{len(comps)} matrix")
    system = SystemProblem(grid, tuple(comps), validate(entries))
    solver = _solver(doc.get("solver", {}), "solver")
    algorithm = _algorithm(doc.get("algorithm", {}), "algorithm")
    name = doc.get("name", "")
    if not isinstance(name, str):
        raise ParseError("name", "expected a string")
    return ProblemFile(system, solver, algorithm, name)


def load_problem(path) -> ProblemFile:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError("", f"invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    return parse_problem(doc)
