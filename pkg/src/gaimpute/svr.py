"""Least-squares support vector regression with an RBF kernel.

Fitting solves the LS-SVM dual system

    [ 0   1^T         ] [b]     [0]
    [ 1   K + I/gamma ] [alpha] = [y]

and predictions are ``f(x) = sum_i alpha_i k(x_i, x) + b``.  One regressor
per schema column, each predicting its column from the other columns, makes
up a :class:`SvrEnsemble`.
"""

from __future__ import annotations

import functools
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.spatial.distance import cdist

from . import serialization
from .errors import DataError, NumericalError
from .ga import GaConfig, run_ga
from .parallel import pmap

log = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-8
DEFAULT_LOG_BOUNDS = ((-2.0, 2.0), (-2.0, 6.0))  # log10 width, log10 regularization
DEFAULT_TUNING_GA = GaConfig(population_size=20, generations=20)
DEFAULT_SUBSAMPLE = 3000


@dataclass(frozen=True)
class KernelSpec:
    width: float

    def __post_init__(self):
        if not (self.width > 0 and math.isfinite(self.width)):
            raise DataError("kernel width must be positive and finite")


def _rows(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    return a.reshape(1, -1) if a.ndim == 1 else a


def _gram(sqdist: np.ndarray, width: float) -> np.ndarray:
    return np.exp(-sqdist / (2.0 * width * width))


def kernel_matrix(kernel: KernelSpec, A, B) -> np.ndarray:
    """RBF similarities ``exp(-|a_i - b_j|^2 / (2 width^2))``."""
    A, B = _rows(A), _rows(B)
    if A.shape[1] != B.shape[1]:
        raise DataError(f"kernel inputs have {A.shape[1]} and {B.shape[1]} columns")
    return _gram(cdist(A, B, "sqeuclidean"), kernel.width)


@dataclass(frozen=True)
class SvrModel:
    support_inputs: np.ndarray
    alphas: np.ndarray
    bias: float
    kernel: KernelSpec
    regularization: float
    target_variable: int = 0
    residual: float = 0.0

    def __post_init__(self):
        for name in ("support_inputs", "alphas"):
            a = np.array(getattr(self, name), dtype=float)
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        if self.alphas.shape != (self.support_inputs.shape[0],):
            raise DataError("one dual coefficient per support input is required")

    def to_payload(self) -> dict:
        return {
            "target_variable": self.target_variable,
            "support_inputs": serialization.pack_array(self.support_inputs),
            "alphas": serialization.pack_array(self.alphas),
            "bias": float(self.bias),
            "width": float(self.kernel.width),
            "regularization": float(self.regularization),
            "residual": float(self.residual),
        }

    @classmethod
    def from_payload(cls, p: dict) -> "SvrModel":
        return cls(
            serialization.unpack_array(p["support_inputs"]),
            serialization.unpack_array(p["alphas"]),
            p["bias"],
            KernelSpec(p["width"]),
            p["regularization"],
            p["target_variable"],
            p["residual"],
        )


def _factor(H: np.ndarray):
    scale = float(np.mean(np.diag(H)))
    for jitter in (0.0, 1e-12, 1e-10, 1e-8):
        try:
            return linalg.cho_factor(H + jitter * scale * np.eye(H.shape[0]), lower=True, check_finite=False)
        except linalg.LinAlgError:
            continue
    raise NumericalError(f"LS-SVR system is singular (condition number ~{np.linalg.cond(H):.3g})")


def _bordered_solve(chol, ones_solution, top: float, rhs: np.ndarray) -> tuple[float, np.ndarray]:
    nu = linalg.cho_solve(chol, rhs, check_finite=False)
    b = (nu.sum() - top) / ones_solution.sum()
    return b, nu - b * ones_solution


def _system_residual(H, b, alpha, y) -> tuple[float, float, np.ndarray]:
    top = -alpha.sum()
    rest = y - b - H @ alpha
    scale = np.abs(H).sum(axis=1).max() + 1.0
    backward = max(abs(top), np.abs(rest).max()) / (scale * max(abs(b), np.abs(alpha).max()) + np.abs(y).max() + 1e-300)
    return backward, top, rest


def _fit_gram(K: np.ndarray, y: np.ndarray, regularization: float) -> tuple[float, np.ndarray, float]:
    H = K + np.eye(K.shape[0]) / regularization
    chol = _factor(H)
    eta = linalg.cho_solve(chol, np.ones(K.shape[0]), check_finite=False)
    b, alpha = _bordered_solve(chol, eta, 0.0, y)
    residual, top, rest = _system_residual(H, b, alpha, y)
    for _ in range(3):
        if residual <= RESIDUAL_TOL * 1e-4:
            break
        db, dalpha = _bordered_solve(chol, eta, -top, rest)
        b, alpha = b + db, alpha + dalpha
        residual, top, rest = _system_residual(H, b, alpha, y)
    if not (np.all(np.isfinite(alpha)) and math.isfinite(b)):
        raise NumericalError("LS-SVR solution is not finite")
    if residual > RESIDUAL_TOL:
        raise NumericalError(f"LS-SVR system residual {residual:.3g} exceeds {RESIDUAL_TOL}")
    return float(b), alpha, float(residual)


def fit_lssvr(X, y, regularization: float, kernel: KernelSpec, target_variable: int = 0) -> SvrModel:
    """Solve the dual system; ``residual`` is its normwise backward error."""
    X = _rows(X)
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] == 0 or X.shape[0] != y.size:
        raise DataError("X must be nonempty with one target per row")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise DataError("LS-SVR inputs must be finite")
    if not regularization > 0:
        raise DataError("regularization must be positive")
    b, alpha, residual = _fit_gram(kernel_matrix(kernel, X, X), y, regularization)
    return SvrModel(X, alpha, b, kernel, regularization, target_variable, residual)


def predict(model: SvrModel, x) -> np.ndarray | float:
    """Prediction for one input vector (returns a float) or a batch of rows."""
    single = np.asarray(x).ndim == 1
    X = _rows(x)
    if X.shape[1] != model.support_inputs.shape[1]:
        raise DataError(f"input has {X.shape[1]} features, model expects {model.support_inputs.shape[1]}")
    out = kernel_matrix(model.kernel, X, model.support_inputs) @ model.alphas + model.bias
    return float(out[0]) if single else out


@dataclass
class TuningResult:
    kernel: KernelSpec
    regularization: float
    validation_mse: float
    midpoint_mse: float
    evaluations: int = 0


def tune_hyperparameters(
    X_train, y_train, X_val, y_val,
    ga_config: GaConfig = DEFAULT_TUNING_GA,
    bounds=DEFAULT_LOG_BOUNDS,
    seed: int | None = None,
) -> TuningResult:
    """GA search over (log10 width, log10 regularization) for the lowest validation MSE.

    The midpoint of ``bounds`` is injected into the initial population, so the
    result is never worse than that default guess.
    """
    X_train, X_val = _rows(X_train), _rows(X_val)
    y_train = np.asarray(y_train, dtype=float).ravel()
    y_val = np.asarray(y_val, dtype=float).ravel()
    if X_train.shape[0] == 0 or X_val.shape[0] == 0:
        raise DataError("training and validation sets must be nonempty")
    bounds = np.asarray(bounds, dtype=float).reshape(2, 2)
    if np.any(bounds[:, 0] > bounds[:, 1]):
        raise DataError("each bound must be an ordered (low, high) pair")
    d_train = cdist(X_train, X_train, "sqeuclidean")
    d_val = cdist(X_val, X_train, "sqeuclidean")
    calls = 0

    def val_mse(log_params) -> float:
        nonlocal calls
        calls += 1
        width, reg = 10.0 ** log_params[0], 10.0 ** log_params[1]
        try:
            b, alpha, _ = _fit_gram(_gram(d_train, width), y_train, reg)
        except (NumericalError, DataError):
            return math.inf
        r = _gram(d_val, width) @ alpha + b - y_val
        return float(np.mean(r * r))

    midpoint = bounds.mean(axis=1)
    midpoint_mse = val_mse(midpoint)
    free = bounds[:, 0] < bounds[:, 1]
    best = midpoint
    if free.any():
        def fitness(genes):
            params = midpoint.copy()
            params[free] = genes
            return -val_mse(params)

        config = ga_config if seed is None else ga_config.replace(seed=seed)
        result = run_ga(fitness, bounds[free], config, initial_injections=[midpoint[free]])
        best = midpoint.copy()
        best[free] = result.best.genes
    best_mse = val_mse(best)
    if not math.isfinite(best_mse):
        raise NumericalError("no hyperparameter candidate produced a solvable LS-SVR system")
    return TuningResult(KernelSpec(float(10.0 ** best[0])), float(10.0 ** best[1]), best_mse, midpoint_mse, calls)


@dataclass
class SvrEnsemble:
    models: list[SvrModel]
    tuning: list[dict] = field(default_factory=list)

    def __post_init__(self):
        targets = [m.target_variable for m in self.models]
        if sorted(targets) != list(range(len(self.models))):
            raise DataError("ensemble needs exactly one model per column")
        self.models = sorted(self.models, key=lambda m: m.target_variable)

    @property
    def d(self) -> int:
        return len(self.models)

    def to_payload(self) -> dict:
        return {"d": self.d, "models": [m.to_payload() for m in self.models], "tuning": self.tuning}

    @classmethod
    def from_payload(cls, p: dict) -> "SvrEnsemble":
        ens = cls([SvrModel.from_payload(m) for m in p["models"]], list(p.get("tuning", [])))
        if ens.d != p["d"]:
            raise serialization.ModelFormatError("ensemble size disagrees with its header")
        return ens


def _others(X: np.ndarray, j: int) -> np.ndarray:
    return np.delete(X, j, axis=1)


def _fit_column(j, X, Xv, ga_config, bounds, seed):
    tuned = tune_hyperparameters(_others(X, j), X[:, j], _others(Xv, j), Xv[:, j], ga_config, bounds, seed)
    model = fit_lssvr(_others(X, j), X[:, j], tuned.regularization, tuned.kernel, target_variable=j)
    info = {
        "variable": j,
        "width": tuned.kernel.width,
        "regularization": tuned.regularization,
        "validation_mse": tuned.validation_mse,
        "midpoint_mse": tuned.midpoint_mse,
        "evaluations": tuned.evaluations,
    }
    log.info("SVR column %d: width=%.4g reg=%.4g val_mse=%.4g", j, tuned.kernel.width, tuned.regularization, tuned.validation_mse)
    return model, info


def _values(data) -> np.ndarray:
    mask = getattr(data, "mask", None)
    if mask is not None and not np.all(mask):
        raise DataError("SVR training data must be fully observed")
    return np.array(getattr(data, "values", data), dtype=float)


def fit_ensemble(
    train,
    validation,
    ga_config: GaConfig = DEFAULT_TUNING_GA,
    bounds=DEFAULT_LOG_BOUNDS,
    seed: int = 0,
    subsample: int = DEFAULT_SUBSAMPLE,
    workers: int = 1,
) -> SvrEnsemble:
    """Tune and fit one leave-one-column-out regressor per column."""
    X, Xv = _values(train), _values(validation)
    if X.shape[0] > subsample:
        keep = np.sort(np.random.default_rng(seed).permutation(X.shape[0])[:subsample])
        X = X[keep]
    d = X.shape[1]
    seeds = [int(np.random.SeedSequence(seed, spawn_key=(j,)).generate_state(1)[0]) for j in range(d)]
    job = functools.partial(_fit_one, X=X, Xv=Xv, ga_config=ga_config, bounds=bounds)
    results = pmap(job, list(zip(range(d), seeds)), workers)
    return SvrEnsemble([m for m, _ in results], [info for _, info in results])


def _fit_one(item, X, Xv, ga_config, bounds):
    j, seed = item
    return _fit_column(j, X, Xv, ga_config, bounds, seed)


def recall(ensemble: SvrEnsemble, X) -> np.ndarray:
    """Column j of the output is model j applied to the other columns."""
    X = _rows(X)
    if X.shape[1] != ensemble.d:
        raise DataError(f"expected {ensemble.d} columns, got {X.shape[1]}")
    return np.column_stack([predict(m, _others(X, m.target_variable)) for m in ensemble.models])


def save_ensemble(path, ensemble: SvrEnsemble) -> None:
    serialization.save(path, "svr-ensemble", ensemble.to_payload())


def load_ensemble(path) -> SvrEnsemble:
    _, payload = serialization.load(path, "svr-ensemble")
    return SvrEnsemble.from_payload(payload)
