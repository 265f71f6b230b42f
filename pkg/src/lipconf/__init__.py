"""Exact Lipschitz analysis of configurable MDPs on finite metric spaces."""

from .bounds import BoundReport, Comparison, all_reports
from .errors import LipconfError
from .generators import GeneratorSpec, chain_env, gridworld_env, random_comparison, random_instance
from .improvement import ImprovementTrace, safe_step, spci_run
from .mdp import ConfMDP, Configuration, Policy, discounted_distribution, expected_return, solve_values
from .metric import MetricSpace, validate_metric, wasserstein

__all__ = [
    "BoundReport", "Comparison", "ConfMDP", "Configuration", "GeneratorSpec", "ImprovementTrace",
    "LipconfError", "MetricSpace", "Policy", "all_reports", "chain_env", "discounted_distribution",
    "expected_return", "gridworld_env", "random_comparison", "random_instance", "safe_step",
    "solve_values", "spci_run", "validate_metric", "wasserstein",
]
