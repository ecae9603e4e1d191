"""Kernel regression surrogates with adaptive Gaussian widths."""

from kernadapt.adaptive import AdaptTrace, alpha_step, alternate, init_widths_knn, objective_value
from kernadapt.data import Dataset
from kernadapt.errors import InputError, NumericalError
from kernadapt.kernels import KernelSpec, eval_matrix, gram_l2, l2_inner, l2_inner_quadrature
from kernadapt.modelsel import SweepReport, lambda_sweep, select_lambda
from kernadapt.nadaraya import NwEstimator
from kernadapt.optim import SigmaOptConfig
from kernadapt.ridge import FitConfig, KernelModel, fit_rkhs, predict_model

__all__ = [
    "AdaptTrace", "Dataset", "FitConfig", "InputError", "KernelModel", "KernelSpec",
    "NumericalError", "NwEstimator", "SigmaOptConfig", "SweepReport", "alpha_step",
    "alternate", "eval_matrix", "fit_rkhs", "gram_l2", "init_widths_knn", "l2_inner",
    "l2_inner_quadrature", "lambda_sweep", "objective_value", "predict_model", "select_lambda",
]
__version__ = "0.1.0"
