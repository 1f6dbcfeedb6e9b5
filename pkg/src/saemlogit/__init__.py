"""Logistic regression with covariates missing at random, fitted by SAEM."""

from .data import (MaskedDataset, RowView, Theta, column_means, load_csv, make_row_view, mean_impute,
                   row_view, write_csv)
from .exceptions import (ConvergenceWarning, DomainError, FisherInformationWarning, IdentifiabilityError,
                         ImportanceSamplingError, NotPositiveDefiniteError, ParseError,
                         SeparationWarning, SingularCovarianceError, SingularHessianError)
from .gaussian import ConditionalGaussian, condition, log_density, marginal_log_density, sample
from .inference import FitResult, bic, fit_model, louis_fim, obs_loglik, wald_ci
from .logistic import complete_loglik, fit_newton, logistic_information, predict_prob, score_and_hessian
from .mh import ChainState, acceptance_ratio, run_chain
from .saem import SaemConfig, SaemTrace, saem_fit
from .selection import (ModelSpec, PredictionResult, constrained_saem, exhaustive_select, forward_select,
                        predict_incomplete, predict_proba)
from .simulation import ScoreReport, SimDesign, generate, mar_mask, preset, replicate_study, score

__version__ = "0.1.0"

__all__ = [
    "MaskedDataset",
    "RowView",
    "Theta",
    "column_means",
    "load_csv",
    "make_row_view",
    "mean_impute",
    "row_view",
    "write_csv",
    "ConvergenceWarning",
    "DomainError",
    "FisherInformationWarning",
    "IdentifiabilityError",
    "ImportanceSamplingError",
    "NotPositiveDefiniteError",
    "ParseError",
    "SeparationWarning",
    "SingularCovarianceError",
    "SingularHessianError",
    "ConditionalGaussian",
    "condition",
    "log_density",
    "marginal_log_density",
    "sample",
    "FitResult",
    "bic",
    "fit_model",
    "louis_fim",
    "obs_loglik",
    "wald_ci",
    "complete_loglik",
    "fit_newton",
    "logistic_information",
    "predict_prob",
    "score_and_hessian",
    "ChainState",
    "acceptance_ratio",
    "run_chain",
    "SaemConfig",
    "SaemTrace",
    "saem_fit",
    "ModelSpec",
    "PredictionResult",
    "constrained_saem",
    "exhaustive_select",
    "forward_select",
    "predict_incomplete",
    "predict_proba",
    "ScoreReport",
    "SimDesign",
    "generate",
    "mar_mask",
    "preset",
    "replicate_study",
    "score",
]
