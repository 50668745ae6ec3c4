"""Maximum-entropy solutions of maximum-likelihood score equations."""

__version__ = "0.1.0"

from .baselines import FitConfig, FitResult, fit_logistic_firth, fit_logistic_nr, hat_diagonal
from .entropy_solver import MEEstimate, SolverConfig, kkt_report, solve_me_score, solve_normal_closed_form
from .models import (
    Dataset,
    GammaModel,
    LogisticModel,
    NormalModel,
    PoissonModel,
    ScoreModel,
    digamma,
    gamma_support_heuristic,
)
from .separation import SeparationReport, detect_separation
from .simplex_core import SimplexWeights, SupportGrid, build_support, entropy, reparameterize

__all__ = [
    "Dataset",
    "FitConfig",
    "FitResult",
    "GammaModel",
    "LogisticModel",
    "MEEstimate",
    "NormalModel",
    "PoissonModel",
    "ScoreModel",
    "SeparationReport",
    "SimplexWeights",
    "SolverConfig",
    "SupportGrid",
    "build_support",
    "detect_separation",
    "digamma",
    "entropy",
    "fit_logistic_firth",
    "fit_logistic_nr",
    "gamma_support_heuristic",
    "hat_diagonal",
    "kkt_report",
    "reparameterize",
    "solve_me_score",
    "solve_normal_closed_form",
]
