"""Luenberger-type observers for discrete-time nonlinear systems.

Build an injective change of coordinates in which the plant dynamics
become a stable linear filter driven by the measured output, run that
filter, and invert the coordinates to estimate the state.
"""
from kkl import errors
from kkl.analysis import convergence_report, oscillation_band, unicity_report
from kkl.design import (
    FilterDesign,
    PolyTransform,
    SeriesTransform,
    StackedCoeffTransform,
    build_filter,
    design_with_resampling,
    example_coeffs,
    example_filter,
    example_transform,
    functional_residual,
    injectivity_probe,
    poly_transform,
    sample_eigenvalues,
    series_transform,
)
from kkl.linalg import (
    SpectrumInfo,
    kron,
    lu_solve,
    mat_mul,
    real_embed,
    solve_sylvester,
)
from kkl.runtime import (
    ObserverConfig,
    TrajectoryRecord,
    filter_step,
    invert_grid_nn,
    invert_linear_stack,
    simulate,
)
from kkl.systems import (
    DiscreteSystem,
    LinearPolySystem,
    backward_distinguishability_probe,
    estimate_growth_constants,
    eval_monomials,
    lift_matrix,
    make_oscillator_system,
    monomial_basis,
    system_from_spec,
)
from kkl.verify import run_suite

__version__ = "0.1.0"

__all__ = [
    "DiscreteSystem",
    "FilterDesign",
    "LinearPolySystem",
    "ObserverConfig",
    "PolyTransform",
    "SeriesTransform",
    "SpectrumInfo",
    "StackedCoeffTransform",
    "TrajectoryRecord",
    "backward_distinguishability_probe",
    "build_filter",
    "convergence_report",
    "design_with_resampling",
    "errors",
    "estimate_growth_constants",
    "eval_monomials",
    "example_coeffs",
    "example_filter",
    "example_transform",
    "filter_step",
    "functional_residual",
    "injectivity_probe",
    "invert_grid_nn",
    "invert_linear_stack",
    "kron",
    "lift_matrix",
    "lu_solve",
    "make_oscillator_system",
    "mat_mul",
    "monomial_basis",
    "oscillation_band",
    "poly_transform",
    "real_embed",
    "run_suite",
    "sample_eigenvalues",
    "series_transform",
    "simulate",
    "solve_sylvester",
    "system_from_spec",
    "unicity_report",
    "__version__",
]
