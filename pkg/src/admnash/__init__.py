"""Distributed Nash equilibrium seeking with the accelerated direct method."""

from .algorithms import (
    AdmParams, AdmState, DivergenceError, RunTrace, TuningError, adm_init, adm_step, ddp_step,
    fixed_parameters, gradient_diag, project_augmented, run, theorem_bound, tune_parameters,
)
from .analysis import (
    check_appendix1, check_appendix2, consensus_split, distance_sq, fit_rate, verify_bound,
)
from .config import ConfigError, ExperimentConfig
from .experiment import build, compare, run_experiment
from .game import (
    ActionInterval, EquilibriumCertificate, GameInstance, QuadraticGameSpec, aggregate_lipschitz,
    generate_quadratic_game, nash_residual, project_interval, quadratic_constants, quadratic_game,
    reference_equilibrium,
)
from .graphs import (
    CommGraph, MixingMatrix, generate_named, generate_tree, metropolis_weights, mix,
    second_singular_value,
)

__version__ = "0.1.0"
