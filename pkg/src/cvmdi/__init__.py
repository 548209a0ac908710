"""Simulation and party-local parameter estimation for continuous-variable
measurement-device-independent QKD."""

from .channel_relay import ProtocolParams, analytic_joint_cm, simulate_rounds
from .displacement import apply_displacements, conditional_cm, solve_gains, verify_decorrelation
from .estimation import (
    StructuredCM,
    alice_local_estimate,
    assemble_cm,
    bob_local_estimate,
    build_ledger,
    confidence_halfwidths,
    dv_marginal_counterexample,
)
from .gaussian_core import (
    CovarianceMatrix,
    GaussianModel,
    condition_on,
    empirical_cm,
    gaussian_mutual_information,
    sample,
    validate_cm,
)
from .pipeline import ExperimentConfig, run_equivalence_sweep, run_experiment

__version__ = "0.1.0"
