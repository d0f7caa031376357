"""Sensitivity-guided batch Bayesian optimization with space-filling designs,
Gaussian-process and polynomial-chaos surrogates, and Sobol' reduction."""

from .bayes_opt import AcquisitionSpec, bo_step, maximize_acquisition, propose_batch, ucb
from .benchmarks import REGISTRY, get_benchmark
from .design import lhs_design, maxpro_design, maxpro_value
from .errors import SensboError
from .gp import fit_gp
from .pce import fit_scheme
from .probability import InputModel, MarginalDistribution, OutputTransform, fit_distribution_bic
from .sensitivity import SobolResult, select_influential_subspace, sobol_from_pce, sobol_monte_carlo
from .state import Dataset, SubspaceMask, WorkflowState
from .verification import MeshStudy, discretization_errors, observed_order, richardson_extrapolate
from .workflow import WorkflowConfig, preset_config, run_workflow

__version__ = "0.1.0"

__all__ = [
    "AcquisitionSpec", "Dataset", "InputModel", "MarginalDistribution", "MeshStudy",
    "OutputTransform", "REGISTRY", "SensboError", "SobolResult", "SubspaceMask",
    "WorkflowConfig", "WorkflowState", "bo_step", "discretization_errors", "fit_distribution_bic",
    "fit_gp", "fit_scheme", "get_benchmark", "lhs_design", "maximize_acquisition",
    "maxpro_design", "maxpro_value", "observed_order", "preset_config", "propose_batch",
    "richardson_extrapolate", "run_workflow", "select_influential_subspace", "sobol_from_pce",
    "sobol_monte_carlo", "ucb",
]
