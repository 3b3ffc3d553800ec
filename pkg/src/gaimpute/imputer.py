"""GA search for missing values that a recall model reproduces best.

For a record with known part ``x_k`` and candidate ``x_u`` the fitness is

    -|| r(x) - f(r(x)) ||^2,    x = [x_u; x_k]

where ``f`` is the backend's recall map and ``r`` is the representation it
recalls: the normalized record itself (ANNGA, SVRGA) or its principal
component scores (PCANNGA-11, PCANNGA-10).
"""

from __future__ import annotations

import functools
import logging
from dataclasses import dataclass, field

import numpy as np

from . import autoencoder, pca, serialization, svr
from .dataset import NORMALIZED, DataMatrix, DatasetSchema, denormalize
from .errors import DataError
from .ga import GaConfig, run_ga
from .parallel import pmap

log = logging.getLogger(__name__)

ANNGA = "ANNGA"
PCANNGA_11 = "PCANNGA-11"
PCANNGA_10 = "PCANNGA-10"
SVRGA = "SVRGA"
VARIANTS = (ANNGA, PCANNGA_11, PCANNGA_10, SVRGA)


@dataclass(frozen=True)
class RecallBackend:
    variant: str
    schema: DatasetSchema
    autoencoder: autoencoder.AutoencoderModel | None = None
    pca: pca.PcaTransform | None = None
    svr: svr.SvrEnsemble | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        d = self.schema.width
        if self.variant not in VARIANTS:
            raise DataError(f"unknown backend variant {self.variant!r}")
        if self.variant == SVRGA:
            if self.svr is None or self.svr.d != d:
                raise DataError("SVRGA needs an SVR ensemble with one model per schema column")
            return
        if self.autoencoder is None:
            raise DataError(f"{self.variant} needs an autoencoder")
        if self.variant == ANNGA:
            if self.autoencoder.d != d:
                raise DataError("ANNGA autoencoder width must match the schema")
        else:
            if self.pca is None or self.pca.d != d:
                raise DataError(f"{self.variant} needs a PCA transform fitted on {d} columns")
            if self.pca.k != self.autoencoder.d:
                raise DataError("PCA component count must equal the autoencoder width")

    @property
    def d(self) -> int:
        return self.schema.width

    def to_payload(self) -> dict:
        return {
            "variant": self.variant,
            "schema": self.schema.to_dict(),
            "autoencoder": self.autoencoder.to_payload() if self.autoencoder else None,
            "pca": self.pca.to_payload() if self.pca else None,
            "svr": self.svr.to_payload() if self.svr else None,
            "metadata": self.metadata,
        }

    @classmethod
    def from_payload(cls, p: dict) -> "RecallBackend":
        return cls(
            p["variant"],
            DatasetSchema.from_dict(p["schema"]),
            autoencoder.AutoencoderModel.from_payload(p["autoencoder"]) if p.get("autoencoder") else None,
            pca.PcaTransform.from_payload(p["pca"]) if p.get("pca") else None,
            svr.SvrEnsemble.from_payload(p["svr"]) if p.get("svr") else None,
            dict(p.get("metadata") or {}),
        )


def save_backend(path, backend: RecallBackend) -> None:
    serialization.save(path, "backend", backend.to_payload())


def load_backend(path) -> RecallBackend:
    _, payload = serialization.load(path, "backend")
    return RecallBackend.from_payload(payload)


def comparison_repr(backend: RecallBackend, candidates) -> np.ndarray:
    """Candidates in the space the backend recalls (rows of ``candidates``)."""
    X = np.asarray(candidates, dtype=float)
    if X.shape[-1] != backend.d:
        raise DataError(f"candidate has {X.shape[-1]} values, backend expects {backend.d}")
    if backend.variant in (PCANNGA_11, PCANNGA_10):
        return pca.transform_array(backend.pca, X)
    return X


def recall_full(backend: RecallBackend, candidate) -> np.ndarray:
    """Backend reconstruction of a candidate (vector or batch of rows)."""
    X = np.asarray(candidate, dtype=float)
    if X.shape[-1] != backend.d:
        raise DataError(f"candidate has {X.shape[-1]} values, backend expects {backend.d}")
    if backend.variant == SVRGA:
        out = svr.recall(backend.svr, X)
        return out[0] if X.ndim == 1 else out
    return autoencoder.recall(backend.autoencoder, comparison_repr(backend, X))


@dataclass(frozen=True)
class ImputationTask:
    record: np.ndarray  # normalized, NaN at missing positions
    missing_indices: tuple[int, ...]

    def __post_init__(self):
        record = np.array(self.record, dtype=float)
        record.setflags(write=False)
        object.__setattr__(self, "record", record)
        missing = tuple(int(i) for i in self.missing_indices)
        object.__setattr__(self, "missing_indices", missing)
        if not missing:
            raise DataError("an imputation task needs at least one missing value")
        if len(set(missing)) != len(missing) or not all(0 <= i < record.size for i in missing):
            raise DataError("missing indices must be distinct positions in the record")
        known = self.known_mask
        if not np.all(np.isfinite(record[known])):
            raise DataError("known values must be finite")
        if np.any(record[known] < 0) or np.any(record[known] > 1):
            raise DataError("known values must be normalized into [0, 1]")

    @classmethod
    def from_row(cls, values, mask) -> "ImputationTask":
        return cls(np.where(mask, values, np.nan), tuple(np.flatnonzero(~np.asarray(mask, dtype=bool))))

    @property
    def known_mask(self) -> np.ndarray:
        known = np.ones(self.record.size, dtype=bool)
        known[list(self.missing_indices)] = False
        return known

    @property
    def known_values(self) -> np.ndarray:
        return self.record[self.known_mask]

    @property
    def bounds(self) -> np.ndarray:
        return np.tile([0.0, 1.0], (len(self.missing_indices), 1))

    def assemble(self, genes) -> np.ndarray:
        """Candidate rows with ``genes`` (one row per candidate) substituted."""
        genes = np.asarray(genes, dtype=float)
        single = genes.ndim == 1
        genes = genes.reshape(-1, len(self.missing_indices))
        out = np.repeat(self.record[None, :], genes.shape[0], axis=0)
        out[:, list(self.missing_indices)] = genes
        return out[0] if single else out


def population_fitness(backend: RecallBackend, task: ImputationTask, genes) -> np.ndarray:
    candidates = task.assemble(np.atleast_2d(genes))
    try:
        r = comparison_repr(backend, candidates) - recall_full(backend, candidates)
    except (FloatingPointError, ValueError):
        return np.full(candidates.shape[0], -np.inf)
    out = -np.sum(r * r, axis=1)
    return np.where(np.isfinite(out), out, -np.inf)


def fitness(backend: RecallBackend, task: ImputationTask, genes) -> float:
    """Negated squared recall residual of the completed record; always <= 0."""
    genes = np.asarray(genes, dtype=float).ravel()
    if genes.size != len(task.missing_indices):
        raise DataError("one gene per missing index is required")
    return float(population_fitness(backend, task, genes[None, :])[0])


@dataclass(frozen=True)
class Diagnostics:
    best_fitness: float
    generations: int
    genes: tuple[float, ...]
    missing_indices: tuple[int, ...]
    row: int | None = None


def impute_record(backend: RecallBackend, task: ImputationTask, ga_config: GaConfig, seed: int, row=None, trace=None):
    """Returns ``(raw record, normalized record, Diagnostics)``.

    Known entries of the normalized record are the task's own values.
    """
    result = run_ga(
        functools.partial(population_fitness, backend, task),
        task.bounds,
        ga_config.replace(seed=seed),
        vectorized=True,
        trace=trace,
        trace_tag=None if row is None else {"row": int(row)},
    )
    completed = task.assemble(result.best.genes)
    raw = denormalize(DataMatrix.complete(completed, NORMALIZED), backend.schema).values[0]
    diag = Diagnostics(
        float(result.best.fitness), result.generations,
        tuple(float(g) for g in result.best.genes), task.missing_indices, row,
    )
    return np.array(raw), completed, diag


def row_seed(seed: int, row: int) -> int:
    return int(np.random.SeedSequence(seed, spawn_key=(row,)).generate_state(1)[0])


def _impute_rows(rows, backend, ga_config, seed, trace=None):
    out = []
    for row, values, mask in rows:
        task = ImputationTask.from_row(values, mask)
        try:
            _, completed, diag = impute_record(backend, task, ga_config, row_seed(seed, row), row, trace)
        except DataError as exc:
            raise DataError(f"row {row}: {exc}") from exc
        out.append((row, completed, diag))
    return out


def impute_dataset(backend: RecallBackend, data: DataMatrix, ga_config: GaConfig, seed: int, workers: int = 1, trace=None):
    """Complete every row with missing cells; returns ``(DataMatrix, [Diagnostics])``.

    Row ``i`` is searched with a seed derived from ``(seed, i)``, so the
    result does not depend on ``workers``.  A ``trace`` stream forces
    sequential execution.
    """
    if trace is not None:
        workers = 1
    if data.space != NORMALIZED:
        raise DataError("impute_dataset expects normalized data")
    if data.shape[1] != backend.d:
        raise DataError(f"data has {data.shape[1]} columns, backend expects {backend.d}")
    values = np.array(data.values)
    todo = [(int(i), data.values[i], data.mask[i]) for i in np.flatnonzero(~data.complete_rows)]
    n_chunks = max(1, min(len(todo), workers if workers else 1))
    chunks = [todo[k::n_chunks] for k in range(n_chunks)]
    job = functools.partial(_impute_rows, backend=backend, ga_config=ga_config, seed=seed, trace=trace)
    diagnostics = []
    for chunk in pmap(job, chunks, workers):
        for row, completed, diag in chunk:
            missing = list(diag.missing_indices)
            values[row, missing] = completed[missing]
            diagnostics.append(diag)
    diagnostics.sort(key=lambda d: d.row)
    return DataMatrix.complete(values, NORMALIZED), diagnostics
