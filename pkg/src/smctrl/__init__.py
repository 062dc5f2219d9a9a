# -*- coding: utf-8 -*-
"""Semi-Markov processes with age-dependent hazards: simulation, nonlinear Kolmogorov equations, intensity control."""

from smctrl.errors import (
    SmctrlError,
    InvalidModelError,
    DomainError,
    ConfigurationError,
    ContractViolationError,
    NumericalError,
    NonConvergenceError,
    QuadratureError,
    EXIT_OK,
    EXIT_VALIDATION,
    EXIT_NUMERICAL,
)
from smctrl.schemas import (
    ModelDocument,
    ProblemDocument,
    EstimateDocument,
    RunManifestDocument,
)
from smctrl.model import (
    AgePoint,
    SemiMarkovModel,
    cumulative_hazard,
    survival,
    distribution_H,
    no_jump_probability,
    kernel_Q,
    invert_cumulative_hazard,
    load_model,
)
from smctrl.simulate import (
    NO_JUMP,
    Trajectory,
    path_rng,
    sample_holding_time,
    sample_mark,
    sample_first_jump,
    simulate_path,
    simulate_paths,
    simulate_controlled_path,
    PathBatch,
    simulate_batch,
    simulate_controlled_batch,
    evaluate_state,
    left_state,
)
from smctrl.mpp import (
    MarkField,
    integrate_time,
    integrate_p,
    integrate_compensator,
    integrate_q,
)
from smctrl.kolmogorov import (
    GeneratorSpec,
    ValueField,
    PicardReport,
    BSDEPath,
    EnergyCheck,
    contraction_constant,
    spot_check_lipschitz,
    apply_L,
    value_at,
    solve_backward,
    solve_picard,
    recover_bsde,
    increment_field,
    check_ito_formula,
    check_energy_identity,
)
from smctrl.control import (
    ControlProblem,
    FeedbackLaw,
    ConstantFeedback,
    TabularFeedback,
    GridFeedback,
    CallableFeedback,
    load_problem,
    hamiltonian,
    hamiltonian_batch,
    gamma_set,
    hamiltonian_lipschitz,
    hamiltonian_generator,
    solve_hjb,
    extract_feedback,
)
from smctrl.montecarlo import (
    CostEstimate,
    girsanov_weight,
    estimate_cost,
    estimate_cost_weighted,
    estimate_cost_thinned,
    mean_girsanov_weight,
)
from smctrl.oracle import (
    ExampleConfig,
    ExampleSolution,
    ExampleReport,
    example_model,
    example_problem,
    oracle_y0,
    oracle_y0_ode,
    oracle_y1,
    oracle_full,
    verify_example,
)

__version__ = "0.1.0"

__all__ = [
    # Errors
    "SmctrlError",
    "InvalidModelError",
    "DomainError",
    "ConfigurationError",
    "ContractViolationError",
    "NumericalError",
    "NonConvergenceError",
    "QuadratureError",
    "EXIT_OK",
    "EXIT_VALIDATION",
    "EXIT_NUMERICAL",
    # Documents
    "ModelDocument",
    "ProblemDocument",
    "EstimateDocument",
    "RunManifestDocument",
    # Model
    "AgePoint",
    "SemiMarkovModel",
    "cumulative_hazard",
    "survival",
    "distribution_H",
    "no_jump_probability",
    "kernel_Q",
    "invert_cumulative_hazard",
    "load_model",
    # Simulation
    "NO_JUMP",
    "Trajectory",
    "path_rng",
    "sample_holding_time",
    "sample_mark",
    "sample_first_jump",
    "simulate_path",
    "simulate_paths",
    "simulate_controlled_path",
    "PathBatch",
    "simulate_batch",
    "simulate_controlled_batch",
    "evaluate_state",
    "left_state",
    # Jump-measure integrals
    "MarkField",
    "integrate_time",
    "integrate_p",
    "integrate_compensator",
    "integrate_q",
    # Kolmogorov equation and BSDE
    "GeneratorSpec",
    "ValueField",
    "PicardReport",
    "BSDEPath",
    "EnergyCheck",
    "contraction_constant",
    "spot_check_lipschitz",
    "apply_L",
    "value_at",
    "solve_backward",
    "solve_picard",
    "recover_bsde",
    "increment_field",
    "check_ito_formula",
    "check_energy_identity",
    # Control
    "ControlProblem",
    "FeedbackLaw",
    "ConstantFeedback",
    "TabularFeedback",
    "GridFeedback",
    "CallableFeedback",
    "load_problem",
    "hamiltonian",
    "hamiltonian_batch",
    "gamma_set",
    "hamiltonian_lipschitz",
    "hamiltonian_generator",
    "solve_hjb",
    "extract_feedback",
    # Monte Carlo
    "CostEstimate",
    "girsanov_weight",
    "estimate_cost",
    "estimate_cost_weighted",
    "estimate_cost_thinned",
    "mean_girsanov_weight",
    # Worked example
    "ExampleConfig",
    "ExampleSolution",
    "ExampleReport",
    "example_model",
    "example_problem",
    "oracle_y0",
    "oracle_y0_ode",
    "oracle_y1",
    "oracle_full",
    "verify_example",
]
