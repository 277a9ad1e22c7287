"""Multi-output Gaussian process models built from convolved kernels, with
hyperparameters learned by enhanced particle swarm optimisation."""

from .data import Dataset, load_dataset_csv, save_dataset_csv, split_dataset
from .kernel import (Hyperparameters, KernelConfig, build_K_cross, build_K_yy,
                     cross_cov, sample_hyperparameters)
from .local import (Bounds, FitnessProblem, LocalResult, MissingGradient,
                    bfgs_minimize, cg_minimize, restarted_local)
from .model import (HyperparameterObjective, Prediction, TrainedModel,
                    condition, load_model, mse, mse_grad, mse_per_output,
                    nll, nll_grad, predict, save_model)
from .numerics import (CholFactor, DimensionMismatch, NonFiniteValue,
                       NotPositiveDefinite, RngStream, cholesky_psd,
                       fd_gradient, logdet, solve_psd)
from .pso import (NoProgress, PsoConfig, RunResult, RunTrace, run_gradient,
                  run_hybrid, run_multistart, run_standard)

__version__ = "0.1.0"

__all__ = [
    "Dataset", "load_dataset_csv", "save_dataset_csv", "split_dataset",
    "Hyperparameters", "KernelConfig", "build_K_cross", "build_K_yy",
    "cross_cov", "sample_hyperparameters",
    "Bounds", "FitnessProblem", "LocalResult", "MissingGradient",
    "bfgs_minimize", "cg_minimize", "restarted_local",
    "HyperparameterObjective", "Prediction", "TrainedModel", "condition",
    "load_model", "mse", "mse_grad", "mse_per_output", "nll", "nll_grad",
    "predict", "save_model",
    "CholFactor", "DimensionMismatch", "NonFiniteValue", "NotPositiveDefinite",
    "RngStream", "cholesky_psd", "fd_gradient", "logdet", "solve_psd",
    "NoProgress", "PsoConfig", "RunResult", "RunTrace", "run_gradient",
    "run_hybrid", "run_multistart", "run_standard",
]
