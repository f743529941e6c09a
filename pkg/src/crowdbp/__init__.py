"""Crowdsourced label aggregation with Dirichlet worker priors: mean-field and
belief-propagation inference, joint classifier training, synthetic scenarios
and brute-force references."""

from .core import AssignmentGraph, CrowdDataset, DataError, argmax_labels, denoised_accuracy
from .priors import WorkerPrior, parse_prior
from .meanfield import mf_infer
from .bp import FactorEvalConfig, bp_run
from .em import EMConfig, RunResult, run_algorithm

__version__ = "0.1.0"

__all__ = [
    "AssignmentGraph", "CrowdDataset", "DataError", "argmax_labels", "denoised_accuracy",
    "WorkerPrior", "parse_prior", "mf_infer", "FactorEvalConfig", "bp_run", "EMConfig",
    "RunResult", "run_algorithm",
]
