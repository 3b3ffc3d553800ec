"""Bottleneck recall network: an MLP trained to reproduce its own input."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import mlp, serialization
from .errors import DataError

IDENTITY = "identity"
PCA_SPACE = "pca-transformed"


@dataclass(frozen=True)
class AutoencoderModel:
    core: mlp.MlpModel
    training_space: str = IDENTITY

    def __post_init__(self):
        if self.core.input_count != self.core.output_count:
            raise DataError("autoencoder input and output widths must match")
        if self.core.hidden_count >= self.core.input_count:
            raise DataError(
                f"bottleneck violated: {self.core.hidden_count} hidden units for {self.core.input_count} inputs"
            )
        if self.training_space not in (IDENTITY, PCA_SPACE):
            raise DataError(f"unknown training space {self.training_space!r}")

    @property
    def d(self) -> int:
        return self.core.input_count

    def to_payload(self) -> dict:
        return {"training_space": self.training_space, "core": self.core.to_payload()}

    @classmethod
    def from_payload(cls, payload: dict) -> "AutoencoderModel":
        return cls(mlp.MlpModel.from_payload(payload["core"]), payload["training_space"])


def _matrix(data) -> np.ndarray:
    mask = getattr(data, "mask", None)
    if mask is not None and not np.all(mask):
        raise DataError("autoencoder training data must be fully observed")
    return np.atleast_2d(np.asarray(getattr(data, "values", data), dtype=float))


def train_autoencoder(train, validation, hidden_count: int, config: mlp.TrainConfig, training_space: str = IDENTITY):
    """Train a d-M-d network with targets equal to inputs.

    Returns ``(model, history)``.
    """
    X, Xv = _matrix(train), _matrix(validation)
    d = X.shape[1]
    if not 1 <= hidden_count < d:
        raise DataError(f"hidden_count must lie in [1, {d - 1}] for a bottleneck, got {hidden_count}")
    start = mlp.init_model(d, hidden_count, d, config.seed, config.weight_init_scale)
    core, history = mlp.train_scg(start, (X, X), (Xv, Xv), config)
    return AutoencoderModel(core, training_space), history


def recall(model: AutoencoderModel, x) -> np.ndarray:
    """Reconstruction of one vector or a batch of rows."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != model.d:
        raise DataError(f"expected {model.d} values, got {x.shape[-1]}")
    return mlp.forward(model.core, x)


def reconstruction_mse(model: AutoencoderModel, data) -> float:
    X = _matrix(data)
    r = recall(model, X) - X
    return float(np.mean(r * r))


def save_autoencoder(path, model: AutoencoderModel) -> None:
    serialization.save(path, "autoencoder", model.to_payload())


def load_autoencoder(path) -> AutoencoderModel:
    _, payload = serialization.load(path, "autoencoder")
    return AutoencoderModel.from_payload(payload)
