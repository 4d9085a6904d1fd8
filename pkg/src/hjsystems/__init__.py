"""Weakly coupled Hamilton-Jacobi systems on the flat torus.

The critical solution is built as the monotone limit of subsolutions, each
sweep solving one scalar discounted equation per component with the others
frozen.
"""

from .aubry import (
    AubryEstimate,
    EquilibriumList,
    RigidityViolated,
    classify_isolated,
    detect_equilibria,
    estimate_from_pinning,
    rigidity_check,
)
from .core import GridField, HJSystemsError, TorusGrid, VectorField, discrete_gradient, interpolate, one_sided_gradients
from .coupling import CouplingMatrix, equilibrium_distribution, validate
from .critical import (
    AlgorithmHistory,
    SystemProblem,
    estimate_beta,
    initial_subsolution,
    residual,
    run_algorithm,
    sweep,
)
from .diagnostics import (
    lipschitz_estimate,
    strict_differentiability_probe,
    superdifferential_probe,
)
from .discounted import (
    DiscountedProblem,
    SolverConfig,
    bellman_update,
    comparison_check,
    extract_trajectory,
    solve_discounted,
)
from .eikonal import (
    EffectiveHamiltonian,
    IntrinsicMetricGraph,
    intrinsic_distance,
    maximal_subsolution,
    metric_subsolution_check,
    scalar_aubry,
    scalar_critical_value,
)
from .hamiltonian import HamiltonianComponent, Mode, TrigPotential, eval_h, eval_lagrangian, min_over_p, support_function
from .pipeline import RunResult, run_problem, trace, write_artifacts
from .problem import AlgorithmConfig, ParseError, ProblemFile, load_problem, parse_problem

__version__ = "0.1.0"
