"""ultradiff: ultra-slow diffusion on a logarithmic clock.

Simulation of fractional-in-log-time diffusion, regional gradient
controllability analysis, and minimum-energy control synthesis on
rectangular domains.
"""

from .logtime import LogTimeWindow, graded_grid
from .mittag_leffler import (
    MLParams,
    MLConvergenceError,
    PropagatorKernelSpec,
    eval_ml,
    mittag_leffler,
    ml_on_negative_axis,
    kernel_kappa,
    free_propagator,
)
from .spectral import (
    Actuator,
    ActuatorSet,
    GradientBasisGram,
    RectDomain,
    Region,
    SpectralBasis,
    actuator_coefficients,
    adjoint_gradient_coefficients,
    dirichlet_eigenpairs,
    gradient_gram,
    region_inner_product,
)
from .solver import (
    ControlSignal,
    EnergyDivergenceError,
    SpectralState,
    adjoint_solution,
    final_gradient,
    forced_solution,
    free_solution,
)
from .controllability import (
    ControllabilityVerdict,
    GradientGramian,
    approx_controllability_verdict,
    apply_H,
    apply_H_adjoint,
    assemble_gramian,
    strategic_test,
    worked_example_mode_means,
    worked_example_pairing_table,
)
from .hum import (
    HumProblem,
    HumSolution,
    MinimalityReport,
    energy,
    g_norm,
    solve_hum,
    solve_state_hum,
    verify_minimality,
)

__version__ = "0.1.0"

__all__ = [
    "LogTimeWindow",
    "graded_grid",
    "MLParams",
    "MLConvergenceError",
    "PropagatorKernelSpec",
    "eval_ml",
    "mittag_leffler",
    "ml_on_negative_axis",
    "kernel_kappa",
    "free_propagator",
    "Actuator",
    "ActuatorSet",
    "GradientBasisGram",
    "RectDomain",
    "Region",
    "SpectralBasis",
    "actuator_coefficients",
    "adjoint_gradient_coefficients",
    "dirichlet_eigenpairs",
    "gradient_gram",
    "region_inner_product",
    "ControlSignal",
    "EnergyDivergenceError",
    "SpectralState",
    "adjoint_solution",
    "final_gradient",
    "forced_solution",
    "free_solution",
    "ControllabilityVerdict",
    "GradientGramian",
    "approx_controllability_verdict",
    "apply_H",
    "apply_H_adjoint",
    "assemble_gramian",
    "strategic_test",
    "worked_example_mode_means",
    "worked_example_pairing_table",
    "HumProblem",
    "HumSolution",
    "MinimalityReport",
    "energy",
    "g_norm",
    "solve_hum",
    "solve_state_hum",
    "verify_minimality",
    "__version__",
]
