"""Training of the four recall backends from prepared, normalized partitions."""

from __future__ import annotations

import logging

import numpy as np

from . import autoencoder, mlp, pca, svr
from .dataset import DataMatrix, DatasetSchema
from .errors import DataError
from .ga import GaConfig
from .imputer import ANNGA, PCANNGA_10, PCANNGA_11, SVRGA, RecallBackend

log = logging.getLogger(__name__)

DEFAULT_HIDDEN = {ANNGA: 10, PCANNGA_11: 10, PCANNGA_10: 9}


def default_pca_k(variant: str, d: int) -> int:
    return d - 1 if variant == PCANNGA_10 else d


def _curves(history: mlp.History) -> dict:
    return {
        "train_loss": list(history.train_loss),
        "validation_loss": list(history.validation_loss),
        "best_cycle": history.best_cycle,
        "stopped_early": history.stopped_early,
    }


def train_backend(
    variant: str,
    schema: DatasetSchema,
    train: DataMatrix,
    validation: DataMatrix,
    *,
    hidden_count: int | None = None,
    train_config: mlp.TrainConfig = mlp.TrainConfig(),
    pca_k: int | None = None,
    hidden_candidates=None,
    hidden_repeats: int = 1,
    svr_ga: GaConfig = svr.DEFAULT_TUNING_GA,
    svr_bounds=svr.DEFAULT_LOG_BOUNDS,
    svr_subsample: int = svr.DEFAULT_SUBSAMPLE,
    workers: int = 1,
) -> tuple[RecallBackend, dict]:
    """Fit the models behind ``variant``; returns the backend and a training report."""
    if not (train.mask.all() and validation.mask.all()):
        raise DataError("training and validation partitions must be complete")
    d = schema.width
    report: dict = {"variant": variant}

    if variant == SVRGA:
        ensemble = svr.fit_ensemble(
            train, validation, svr_ga, svr_bounds, seed=train_config.seed, subsample=svr_subsample, workers=workers
        )
        report["svr"] = {"subsample": svr_subsample, "bounds_log10": np.asarray(svr_bounds).tolist(), "tuning": ensemble.tuning}
        return RecallBackend(variant, schema, svr=ensemble), report

    X, Xv = np.array(train.values), np.array(validation.values)
    transform = None
    space = autoencoder.IDENTITY
    if variant in (PCANNGA_11, PCANNGA_10):
        k = pca_k if pca_k is not None else default_pca_k(variant, d)
        transform = pca.fit(X, k)
        X, Xv = pca.transform_array(transform, X), pca.transform_array(transform, Xv)
        space = autoencoder.PCA_SPACE
        report["pca"] = {"k": k, "eigenvalues": transform.eigenvalues.tolist()}
    elif variant != ANNGA:
        raise DataError(f"unknown backend variant {variant!r}")

    hidden = hidden_count if hidden_count is not None else min(DEFAULT_HIDDEN[variant], X.shape[1] - 1)
    if hidden_candidates:
        candidates = [m for m in hidden_candidates if m < X.shape[1]]
        hidden, table = mlp.select_hidden_count(candidates, (X, X), (Xv, Xv), train_config, hidden_repeats)
        report["hidden_search"] = {str(m): e for m, e in table.items()}
    log.info("training %s autoencoder %d-%d-%d", variant, X.shape[1], hidden, X.shape[1])
    model, history = autoencoder.train_autoencoder(X, Xv, hidden, train_config, space)
    report["hidden_count"] = hidden
    report["training"] = _curves(history)
    report["validation_mse"] = autoencoder.reconstruction_mse(model, Xv)
    return RecallBackend(variant, schema, autoencoder=model, pca=transform), report
