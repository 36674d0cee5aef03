"""Locally private k-means / k-median clustering simulator."""

from .budget import BudgetLedger, PrivacyBudget, compose
from .config import ExperimentConfig, emit_config, load_config, parse_config
from .errors import RefusalError
from .geometry import CenterSet, PointSet, WeightedPointSet, cost, opt_oracle
from .pipeline import PipelineConfig, weighted_centers
from .solver import SolverConfig, solve

__version__ = "0.1.0"

__all__ = [
    "BudgetLedger",
    "CenterSet",
    "ExperimentConfig",
    "PipelineConfig",
    "PointSet",
    "PrivacyBudget",
    "RefusalError",
    "SolverConfig",
    "WeightedPointSet",
    "compose",
    "cost",
    "emit_config",
    "load_config",
    "opt_oracle",
    "parse_config",
    "solve",
    "weighted_centers",
    "__version__",
]
