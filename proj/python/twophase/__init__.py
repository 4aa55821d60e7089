"""Optimal and maximin second-phase sampling rules for two-phase studies."""

from ._core import (
    EstimationProblem,
    InvalidInput,
    NumericalError,
    classification_demo,
    design_rules,
    fit_moments,
    generate,
    kappa_default,
    psi_ate_binary,
    psi_classification,
    psi_mean,
    run_pipeline,
    run_scenario,
    solve_threshold,
    two_phase_eif,
)

__all__ = [
    "EstimationProblem",
    "InvalidInput",
    "NumericalError",
    "classification_demo",
    "design_rules",
    "fit_moments",
    "generate",
    "kappa_default",
    "psi_ate_binary",
    "psi_classification",
    "psi_mean",
    "run_pipeline",
    "run_scenario",
    "solve_threshold",
    "two_phase_eif",
]
