"""Accuracy measures and the repeated-sample benchmark protocol.

MSE is measured on normalized values before rounding; accuracies are
measured on raw values after denormalization and rounding.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from typing import Callable, Sequence

import numpy as np

from .dataset import NORMALIZED, DEFAULT_TARGETS, DataMatrix, DatasetSchema, denormalize
from .errors import DataError
from .ga import GaConfig
from .imputer import impute_dataset

# within-one-unit accuracy for these, exact match for everything else
DEFAULT_TOLERANCES = {"Education": 1.0, "Age Group": 1.0}


def _pair(truth, imputed, allow_empty=False) -> tuple[np.ndarray, np.ndarray]:
    t = np.asarray(truth, dtype=float).ravel()
    y = np.asarray(imputed, dtype=float).ravel()
    if t.size != y.size:
        raise DataError(f"length mismatch: {t.size} truths, {y.size} imputations")
    if t.size == 0 and not allow_empty:
        raise DataError("metrics are undefined for empty input")
    return t, y


def mse(truth, imputed) -> float:
    """Sum of squared differences divided by the number of values."""
    t, y = _pair(truth, imputed)
    return float(np.sum((t - y) ** 2) / t.size)


def classification_accuracy(truth, imputed) -> float:
    """Percentage of exact matches."""
    t, y = _pair(truth, imputed)
    return 100.0 * np.count_nonzero(t == y) / t.size


def tolerance_accuracy(truth, imputed, tolerance: float) -> float:
    """Percentage of imputations within ``tolerance`` of the truth."""
    if tolerance < 0:
        raise DataError("tolerance must be nonnegative")
    t, y = _pair(truth, imputed)
    return 100.0 * np.count_nonzero(np.abs(t - y) <= tolerance) / t.size


def round_half_up(value: float, digits: int = 1) -> float:
    quantum = Decimal(1).scaleb(-digits)
    return float(Decimal(repr(float(value))).quantize(quantum, rounding=ROUND_HALF_UP))


@dataclass
class EvaluationReport:
    variant: str
    variables: list[str]
    accuracy: dict[str, list[float]]  # variable -> per-run percentage
    mse: dict[str, list[float]]  # variable -> per-run normalized-space MSE
    counts: dict[str, list[int]] = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    @property
    def runs(self) -> int:
        return len(next(iter(self.accuracy.values()))) if self.accuracy else 0

    def average_accuracy(self, variable: str) -> float:
        return float(np.mean(self.accuracy[variable]))

    def average_mse(self, variable: str) -> float:
        return float(np.mean(self.mse[variable]))

    def overall_accuracy(self) -> float:
        return float(np.mean([self.average_accuracy(v) for v in self.variables]))

    def to_text(self) -> str:
        """Plain-text accuracy table (runs + average) followed by the MSE table."""
        name_w = max(len(self.variant) + 4, *(len(v) for v in self.variables)) + 2
        head = [f"{self.variant}(%)".ljust(name_w)]
        head += [f"Run {r + 1}".rjust(8) for r in range(self.runs)] + ["Average".rjust(9)]
        lines = ["".join(head)]
        for v in self.variables:
            cells = [f"{round_half_up(a):.1f}".rjust(8) for a in self.accuracy[v]]
            lines.append(v.ljust(name_w) + "".join(cells) + f"{round_half_up(self.average_accuracy(v)):.1f}".rjust(9))
        lines.append("")
        lines.append("Average mean square error (normalized, before rounding)".ljust(name_w))
        lines.append("Variable".ljust(name_w) + self.variant.rjust(12))
        for v in self.variables:
            lines.append(v.ljust(name_w) + f"{self.average_mse(v):.6f}".rjust(12))
        return "\n".join(lines) + "\n"

    def records(self) -> list[dict]:
        out = []
        for v in self.variables:
            for metric, table, avg in (
                ("accuracy", self.accuracy, self.average_accuracy),
                ("mse", self.mse, self.average_mse),
            ):
                for r, value in enumerate(table[v], start=1):
                    out.append({"variant": self.variant, "variable": v, "run": r, "metric": metric, "value": value})
                out.append({"variant": self.variant, "variable": v, "run": "average", "metric": metric, "value": avg(v)})
        return out

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.records())


def _run_rng(seed: int, run: int) -> tuple[np.random.Generator, int]:
    ss = np.random.SeedSequence(seed, spawn_key=(run,))
    child_seed = int(ss.generate_state(1)[0])
    return np.random.default_rng(ss), child_seed


def run_benchmark(
    backend,
    pool: DataMatrix,
    runs: int = 3,
    records_per_run: int = 1000,
    target_variables: Sequence[str] = DEFAULT_TARGETS,
    ga_config: GaConfig = GaConfig(),
    seed: int = 0,
    tolerances: dict[str, float] | None = None,
    schema: DatasetSchema | None = None,
    workers: int = 1,
    imputer: Callable = impute_dataset,
) -> EvaluationReport:
    """Score ``backend`` on ``runs`` random samples drawn from a complete pool.

    In each sample, record ``i`` loses ``target_variables[i % len(targets)]``.
    """
    schema = schema or backend.schema
    if runs < 1:
        raise DataError("runs must be at least 1")
    if pool.space != NORMALIZED or not pool.mask.all():
        raise DataError("the benchmark pool must be complete, normalized data")
    if pool.n_rows < records_per_run:
        raise DataError(f"pool has {pool.n_rows} rows, {records_per_run} needed per run")
    tolerances = dict(DEFAULT_TOLERANCES if tolerances is None else tolerances)
    targets = list(target_variables)
    cols = [schema.index(v) for v in targets]

    accuracy = {v: [] for v in targets}
    errors = {v: [] for v in targets}
    counts = {v: [] for v in targets}
    run_seeds = []
    for run in range(runs):
        rng, run_seed = _run_rng(seed, run)
        run_seeds.append(run_seed)
        sample = pool.rows(np.sort(rng.choice(pool.n_rows, size=records_per_run, replace=False)))
        assigned = np.array([cols[i % len(cols)] for i in range(records_per_run)], dtype=int)
        mask = np.ones(sample.shape, dtype=bool)
        mask[np.arange(records_per_run), assigned] = False
        amputed = DataMatrix(sample.values, mask, NORMALIZED)

        completed, _ = imputer(backend, amputed, ga_config, run_seed, workers=workers)
        truth_raw = denormalize(sample, schema).values
        imputed_raw = denormalize(completed, schema).values
        for v, j in zip(targets, cols):
            rows = np.flatnonzero(assigned == j)
            counts[v].append(int(rows.size))
            if rows.size == 0:
                raise DataError(f"records_per_run too small: no record imputes {v!r}")
            accuracy[v].append(tolerance_accuracy(truth_raw[rows, j], imputed_raw[rows, j], tolerances.get(v, 0.0)))
            errors[v].append(mse(sample.values[rows, j], completed.values[rows, j]))

    metadata = {
        "variant": getattr(backend, "variant", type(backend).__name__),
        "runs": runs,
        "records_per_run": records_per_run,
        "seed": seed,
        "run_seeds": run_seeds,
        "tolerances": {v: tolerances.get(v, 0.0) for v in targets},
        "ga": {
            "population_size": ga_config.population_size,
            "generations": ga_config.generations,
            "selection_q": ga_config.selection_q,
            "mutation_b": ga_config.mutation_b,
        },
        "mse_space": "normalized, before denormalization and rounding",
        "accuracy_space": "raw, after denormalization and rounding",
    }
    return EvaluationReport(metadata["variant"], targets, accuracy, errors, counts, metadata)
