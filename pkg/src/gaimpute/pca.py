"""Principal components of the normalized data and the maps in and out of them."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import serialization
from .dataset import COMPONENT, DataMatrix
from .errors import DataError


@dataclass(frozen=True)
class PcaTransform:
    mean: np.ndarray  # (d,)
    components: np.ndarray  # (d, k), orthonormal columns
    eigenvalues: np.ndarray  # (k,), descending

    def __post_init__(self):
        for name in ("mean", "components", "eigenvalues"):
            a = np.array(getattr(self, name), dtype=float)
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    @property
    def d(self) -> int:
        return self.components.shape[0]

    @property
    def k(self) -> int:
        return self.components.shape[1]

    def to_payload(self) -> dict:
        return {
            "d": self.d,
            "k": self.k,
            "mean": serialization.pack_array(self.mean),
            "eigenvalues": serialization.pack_array(self.eigenvalues),
            "components": serialization.pack_array(self.components),
        }

    @classmethod
    def from_payload(cls, payload: dict) -> "PcaTransform":
        t = cls(*(serialization.unpack_array(payload[key]) for key in ("mean", "components", "eigenvalues")))
        if (t.d, t.k) != (payload["d"], payload["k"]):
            raise serialization.ModelFormatError("recorded PCA dimensions disagree with arrays")
        return t


def _values(data) -> np.ndarray:
    if isinstance(data, DataMatrix):
        if not data.mask.all():
            raise DataError("PCA needs fully observed data")
        return np.array(data.values)
    return np.atleast_2d(np.asarray(data, dtype=float))


def fit(data, k: int) -> PcaTransform:
    """Eigen-decompose the unbiased covariance and keep the top ``k`` directions.

    Each eigenvector is signed so its largest-magnitude entry is positive.
    """
    X = _values(data)
    n, d = X.shape
    if n < 2:
        raise DataError("PCA needs at least two rows")
    if not 1 <= k <= d:
        raise DataError(f"k must lie in [1, {d}], got {k}")
    mean = X.mean(axis=0)
    centered = X - mean
    cov = centered.T @ centered / (n - 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(-eigvals, kind="stable")[:k]
    eigvals = np.clip(eigvals[order], 0.0, None)
    eigvecs = eigvecs[:, order]
    pivots = np.argmax(np.abs(eigvecs), axis=0)
    eigvecs = eigvecs * np.sign(eigvecs[pivots, np.arange(k)])
    return PcaTransform(mean, eigvecs, eigvals)


def transform_array(t: PcaTransform, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.shape[-1] != t.d:
        raise DataError(f"expected {t.d} columns, got {X.shape[-1]}")
    return (X - t.mean) @ t.components


def inverse_array(t: PcaTransform, P) -> np.ndarray:
    P = np.asarray(P, dtype=float)
    if P.shape[-1] != t.k:
        raise DataError(f"expected {t.k} component columns, got {P.shape[-1]}")
    return P @ t.components.T + t.mean


def transform(t: PcaTransform, data):
    """Centre and project onto the retained components (``P = (D - mean) @ PC``)."""
    if isinstance(data, DataMatrix):
        return DataMatrix.complete(transform_array(t, _values(data)), COMPONENT)
    return transform_array(t, data)


def inverse_transform(t: PcaTransform, p, space: str = "normalized"):
    """Map component scores back (``D' = P @ PC.T + mean``)."""
    if isinstance(p, DataMatrix):
        return DataMatrix.complete(inverse_array(t, _values(p)), space)
    return inverse_array(t, p)


def save_transform(path, t: PcaTransform) -> None:
    serialization.save(path, "pca", t.to_payload())


def load_transform(path) -> PcaTransform:
    _, payload = serialization.load(path, "pca")
    return PcaTransform.from_payload(payload)
