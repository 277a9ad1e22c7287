"""Model conditioning, prediction and the two training objectives.

A model is a kernel configuration, a hyperparameter vector and the
conditioning data; fitting means factorising the observation covariance once
so predictions are cheap afterwards.  Hyperparameters are judged either by
the negative log marginal likelihood of the conditioning data or by the mean
squared error of posterior-mean predictions on a held-out evaluation set;
both come with analytic gradients in the flattened parameter order so that
gradient-based refinement does not need finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernel as kn
from .data import Dataset
from .kernel import Hyperparameters, KernelConfig
from .numerics import (CholFactor, DimensionMismatch, NonFiniteValue,
                       NotPositiveDefinite, cholesky_psd, logdet, solve_psd)

__all__ = [
    "EmptyEvalSet",
    "Prediction",
    "TrainedModel",
    "condition",
    "predict",
    "nll",
    "nll_grad",
    "mse",
    "mse_per_output",
    "mse_grad",
    "HyperparameterObjective",
    "save_model",
    "load_model",
]

_LOG_2PI = float(np.log(2.0 * np.pi))

# Tiny negative predictive variances are rounding noise and get clamped to
# zero; anything below this threshold indicates a real inconsistency.
_VARIANCE_SLACK = -1e-8


class EmptyEvalSet(Exception):
    """Mean squared error was requested over zero evaluation points."""


@dataclass
class Prediction:
    """Posterior mean and (noise-free, clamped non-negative) variance."""

    mean: np.ndarray
    variance: np.ndarray


@dataclass
class TrainedModel:
    """Hyperparameters bound to conditioning data, with the Cholesky factor
    of the observation covariance and the weight vector K^-1 y cached for
    repeated prediction."""

    config: KernelConfig
    hp: Hyperparameters
    data: Dataset
    chol: CholFactor = field(repr=False)
    weights: np.ndarray = field(repr=False)

    @property
    def theta(self) -> np.ndarray:
        return self.hp.flatten()


def condition(hp: Hyperparameters, data: Dataset,
              base_jitter: float | None = None) -> TrainedModel:
    """Bind hyperparameters to conditioning data.

    Factorises K_yy (raising NotPositiveDefinite if even escalated jitter
    fails) and caches the solved weight vector.
    """
    hp.validate()
    k = kn.build_K_yy(data, hp)
    fac = cholesky_psd(k, base_jitter=base_jitter)
    w = solve_psd(fac, data.stacked_targets())
    return TrainedModel(config=hp.config, hp=hp, data=data, chol=fac, weights=w)


def predict(model: TrainedModel, queries: np.ndarray,
            query_output: int) -> Prediction:
    """Posterior mean and variance of one output at the given query rows.

    The variance is the prior variance minus the explained part, without
    observation noise; values in [-1e-8, 0) from rounding are clamped to 0.
    """
    queries = np.atleast_2d(np.asarray(queries, dtype=float))
    kc = kn.build_K_cross(queries, query_output, model.data, model.hp)
    mean = kc @ model.weights
    v = solve_psd(model.chol, kc.T)
    var = kn.prior_variance(query_output, model.hp) - np.einsum(
        "ij,ji->i", kc, v)
    if np.any(var < _VARIANCE_SLACK):
        raise NonFiniteValue(
            f"predictive variance fell to {var.min():.3e}; covariance is inconsistent")
    return Prediction(mean=mean, variance=np.maximum(var, 0.0))


def nll(data: Dataset, hp: Hyperparameters,
        base_jitter: float | None = None) -> float:
    """Negative log marginal likelihood of the stacked observations:
    1/2 y^T K^-1 y + 1/2 log|K| + N/2 log(2 pi)."""
    k = kn.build_K_yy(data, hp)
    fac = cholesky_psd(k, base_jitter=base_jitter)
    y = data.stacked_targets()
    w = solve_psd(fac, y)
    n = y.size
    return float(0.5 * (y @ w) + 0.5 * logdet(fac) + 0.5 * n * _LOG_2PI)


def nll_grad(data: Dataset, hp: Hyperparameters,
             base_jitter: float | None = None) -> np.ndarray:
    """Gradient of the negative log marginal likelihood in flattened order:
    d/dt = 1/2 tr(K^-1 dK) - 1/2 w^T dK w with w = K^-1 y."""
    k, dk = kn.build_K_yy_with_partials(data, hp)
    fac = cholesky_psd(k, base_jitter=base_jitter)
    y = data.stacked_targets()
    w = solve_psd(fac, y)
    kinv = solve_psd(fac, np.eye(k.shape[0]))
    grad = np.empty(dk.shape[0])
    for l in range(dk.shape[0]):
        grad[l] = 0.5 * np.sum(kinv * dk[l]) - 0.5 * (w @ dk[l] @ w)
    return grad


def _stacked_predictions(model: TrainedModel, eval_data: Dataset):
    """Posterior means for every evaluation block, plus residuals."""
    means, residuals = [], []
    for d in range(eval_data.n_outputs):
        if eval_data.inputs[d].shape[0] == 0:
            means.append(np.zeros(0))
            residuals.append(np.zeros(0))
            continue
        kc = kn.build_K_cross(eval_data.inputs[d], d, model.data, model.hp)
        mu = kc @ model.weights
        means.append(mu)
        residuals.append(eval_data.targets[d] - mu)
    return means, residuals


def mse_per_output(eval_data: Dataset, model: TrainedModel) -> np.ndarray:
    """Mean squared prediction error of each output over its evaluation
    block (NaN for outputs with no evaluation points)."""
    _, residuals = _stacked_predictions(model, eval_data)
    out = np.full(eval_data.n_outputs, np.nan)
    for d, r in enumerate(residuals):
        if r.size:
            out[d] = float(np.mean(r ** 2))
    return out


def mse(eval_data: Dataset, model: TrainedModel) -> float:
    """Overall mean squared prediction error across all evaluation points."""
    if eval_data.total_points == 0:
        raise EmptyEvalSet("no evaluation points")
    _, residuals = _stacked_predictions(model, eval_data)
    sq = sum(float(r @ r) for r in residuals)
    return sq / eval_data.total_points


def mse_grad(eval_data: Dataset, model: TrainedModel) -> np.ndarray:
    """Gradient of the evaluation MSE with respect to the flattened
    hyperparameters, holding the conditioning data fixed.

    Uses d mu / d theta = (dK_*) w - K_* K^-1 (dK) w, so refitting is not
    required; the noise coordinates enter only through K^-1.
    """
    if eval_data.total_points == 0:
        raise EmptyEvalSet("no evaluation points")
    cfg = model.config
    data = model.data
    w = model.weights
    _, dk = kn.build_K_yy_with_partials(data, model.hp)
    dkw = dk @ w                    # (D, N)
    kinv_dkw = np.empty_like(dkw)
    for l in range(dkw.shape[0]):
        kinv_dkw[l] = solve_psd(model.chol, dkw[l])
    grad = np.zeros(cfg.n_hyperparameters)
    for d in range(eval_data.n_outputs):
        xq = eval_data.inputs[d]
        if xq.shape[0] == 0:
            continue
        kc, dkc = kn.build_K_cross_with_partials(xq, d, data, model.hp)
        r = eval_data.targets[d] - kc @ w
        # d mu = dK_* w - K_* K^-1 dK w, folded against the residuals
        dmu = dkc @ w - kinv_dkw @ kc.T  # (D, n_q) after transpose care
        grad += -2.0 * (dmu @ r)
    return grad / eval_data.total_points


class HyperparameterObjective:
    """Optimiser-facing view of a training objective.

    Maps flattened hyperparameter vectors to a scalar fitness (and gradient),
    caching the squared-difference tables of the fixed datasets so repeated
    evaluations only pay for the exponentials.  Factorisation failures and
    non-finite values surface as +inf fitness instead of exceptions so that
    population-based searches can keep going.

    fitness="mse" scores posterior-mean predictions on `eval_data`;
    fitness="nll" scores the marginal likelihood of `train` itself.
    """

    def __init__(self, train: Dataset, config: KernelConfig,
                 fitness: str = "mse", eval_data: Dataset | None = None,
                 base_jitter: float | None = None):
        if fitness not in ("mse", "nll"):
            raise ValueError(f"unknown fitness {fitness!r}")
        if fitness == "mse" and eval_data is None:
            raise EmptyEvalSet("mse fitness needs an evaluation set")
        self.train = train
        self.config = config
        self.fitness = fitness
        self.eval_data = eval_data
        self.base_jitter = base_jitter
        self._train_sq = kn.train_sqdiff(train)
        self._cross_sq = None
        if fitness == "mse":
            self._cross_sq = [
                kn.cross_sqdiff(eval_data.inputs[d], train)
                if eval_data.inputs[d].shape[0] else None
                for d in range(eval_data.n_outputs)
            ]
        self._y = train.stacked_targets()

    def _hp(self, vec):
        hp = Hyperparameters.unflatten(vec, self.config)
        hp.validate()
        return hp

    def value(self, vec) -> float:
        try:
            hp = self._hp(vec)
            k = kn.build_K_yy(self.train, hp, sq=self._train_sq)
            fac = cholesky_psd(k, base_jitter=self.base_jitter)
            w = solve_psd(fac, self._y)
            if self.fitness == "nll":
                out = float(0.5 * (self._y @ w) + 0.5 * logdet(fac)
                            + 0.5 * self._y.size * _LOG_2PI)
            else:
                sq_sum = 0.0
                for d in range(self.eval_data.n_outputs):
                    if self._cross_sq[d] is None:
                        continue
                    kc = kn.build_K_cross(self.eval_data.inputs[d], d,
                                          self.train, hp, sq=self._cross_sq[d])
                    r = self.eval_data.targets[d] - kc @ w
                    sq_sum += float(r @ r)
                out = sq_sum / self.eval_data.total_points
        except (NotPositiveDefinite, ValueError, FloatingPointError):
            return float("inf")
        return out if np.isfinite(out) else float("inf")

    def gradient(self, vec) -> np.ndarray:
        hp = self._hp(vec)
        if self.fitness == "nll":
            return nll_grad(self.train, hp, base_jitter=self.base_jitter)
        model = condition(hp, self.train, base_jitter=self.base_jitter)
        return mse_grad(self.eval_data, model)


# --- flat key-value model files -------------------------------------------

_FORMAT_VERSION = 1


def save_model(model: TrainedModel, path):
    """Write a model as a flat key-value text document.

    Contains the configuration, the flattened hyperparameters (17 significant
    digits, enough to round-trip doubles) and the conditioning rows inline,
    so the file alone reproduces predictions.
    """
    cfg = model.config
    lines = [
        f"format_version = {_FORMAT_VERSION}",
        f"input_dim = {cfg.input_dim}",
        f"n_outputs = {cfg.n_outputs}",
        f"n_latent = {cfg.n_latent}",
    ]
    theta = model.theta
    for i, v in enumerate(theta):
        lines.append(f"theta_{i} = {v:.17g}")
    row = 0
    for d in range(cfg.n_outputs):
        for x, y in zip(model.data.inputs[d], model.data.targets[d]):
            vals = " ".join(f"{v:.17g}" for v in x)
            lines.append(f"row_{row} = {d} {vals} {y:.17g}")
            row += 1
    lines.append(f"n_rows = {row}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_model(path) -> TrainedModel:
    """Rebuild a model from `save_model` output (refactorises K_yy)."""
    kv = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or "=" not in line:
                continue
            key, val = line.split("=", 1)
            kv[key.strip()] = val.strip()
    if int(kv.get("format_version", -1)) != _FORMAT_VERSION:
        raise ValueError("unrecognised model file format")
    cfg = KernelConfig(input_dim=int(kv["input_dim"]),
                       n_outputs=int(kv["n_outputs"]),
                       n_latent=int(kv["n_latent"]))
    theta = np.array([float(kv[f"theta_{i}"])
                      for i in range(cfg.n_hyperparameters)])
    inputs = [[] for _ in range(cfg.n_outputs)]
    targets = [[] for _ in range(cfg.n_outputs)]
    for r in range(int(kv["n_rows"])):
        parts = kv[f"row_{r}"].split()
        d = int(parts[0])
        inputs[d].append([float(v) for v in parts[1:-1]])
        targets[d].append(float(parts[-1]))
    data = Dataset(
        inputs=[np.asarray(x, dtype=float).reshape(-1, cfg.input_dim)
                for x in inputs],
        targets=[np.asarray(y, dtype=float) for y in targets])
    hp = Hyperparameters.unflatten(theta, cfg)
    return condition(hp, data)
