"""Policy learning with an instrumented difference-in-differences design."""
from .core import (
    Dataset,
    LinearPolicy,
    PanelDataset,
    ValidationError,
    augment_with_intercept,
    decide,
    standardize,
    validate,
)
from .inference import ValueInference, variance_plugin
from .nuisance import crossfit, fit_nonparametric, fit_panel, fit_parametric
from .policy import ObjectiveSpec, SearchConfig, evaluate_objective, grid_oracle, learn_policy
from .scores import ScoreVector, build_scores
from .simulation import Scenario, pcd, run_benchmark, simulate_cross_section, simulate_panel

__all__ = [
    "Dataset", "LinearPolicy", "PanelDataset", "ValidationError", "augment_with_intercept",
    "decide", "standardize", "validate", "ValueInference", "variance_plugin", "crossfit",
    "fit_nonparametric", "fit_panel", "fit_parametric", "ObjectiveSpec", "SearchConfig",
    "evaluate_objective", "grid_oracle", "learn_policy", "ScoreVector", "build_scores",
    "Scenario", "pcd", "run_benchmark", "simulate_cross_section", "simulate_panel",
]
