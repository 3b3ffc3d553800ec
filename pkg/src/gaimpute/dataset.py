"""Tabular survey data: schema, ingestion, screening, scaling, splitting.

Every matrix in the pipeline is a :class:`DataMatrix` whose columns follow
the order of a :class:`DatasetSchema`.  Missing cells carry ``mask=False``
and hold ``NaN`` in ``values``.

Synthetic generator
-------------------
:func:`synthesize` stands in for the (non-distributed) antenatal survey.  For
the reference schema it draws, per record and in this order, from
``numpy.random.default_rng(seed)``::

    age        = 14 + round(46 * Beta(2, 4))                     # Age Group
    education  = U{0..13}                                        # Education
    gravidity  = min(Poisson(0.5 + 0.15 * (age - 14)), 11)       # Gravidity
    parity     = gravidity - Binomial(gravidity, 0.2)            # Parity
    score      = (age - 14) / 46 - 0.5 * education / 13 + N(0, 0.05^2)
    hiv        = 1 if score > 0.1 else 0                         # HIV Status
    age_gap    = U{1..7};  race = U{1..5};  province = U{1..9}
    region     = U{1..36}; rpr = U{0..2};   wtrev = U[0.638, 1.2743)

Each line is drawn as one vectorised call over all ``n`` records.  Any other
schema gets independent uniform columns.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .errors import DataError, SchemaError

log = logging.getLogger(__name__)

KINDS = ("binary", "integer", "continuous")
RAW = "raw"
NORMALIZED = "normalized"
COMPONENT = "component"

DEFAULT_TARGETS = ("HIV Status", "Education", "Age Group", "Gravidity", "Parity")


@dataclass(frozen=True)
class VariableSpec:
    name: str
    kind: str
    min: float
    max: float
    lookup: dict[str, int] | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SchemaError(f"{self.name}: unknown kind {self.kind!r}")
        if self.kind == "binary" and (self.min, self.max) != (0, 1):
            raise SchemaError(f"{self.name}: binary variables must span [0, 1]")
        if not self.min < self.max:
            raise SchemaError(f"{self.name}: min must be below max")
        if self.lookup:
            codes = list(self.lookup.values())
            if len(set(codes)) != len(codes):
                raise SchemaError(f"{self.name}: duplicate lookup codes")
            if any(c < self.min or c > self.max for c in codes):
                raise SchemaError(f"{self.name}: lookup code outside [{self.min}, {self.max}]")

    @property
    def discrete(self) -> bool:
        return self.kind != "continuous"

    @property
    def span(self) -> float:
        return self.max - self.min


@dataclass(frozen=True)
class DatasetSchema:
    variables: tuple[VariableSpec, ...]

    def __post_init__(self):
        names = self.names
        if len(set(names)) != len(names):
            raise SchemaError("variable names must be unique")
        if not names:
            raise SchemaError("schema has no variables")

    @property
    def names(self) -> list[str]:
        return [v.name for v in self.variables]

    @property
    def width(self) -> int:
        return len(self.variables)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise SchemaError(f"unknown variable {name!r}") from None

    @property
    def lows(self) -> np.ndarray:
        return np.array([v.min for v in self.variables], dtype=float)

    @property
    def highs(self) -> np.ndarray:
        return np.array([v.max for v in self.variables], dtype=float)

    def to_dict(self) -> dict:
        out = []
        for v in self.variables:
            entry = {"name": v.name, "kind": v.kind, "min": v.min, "max": v.max}
            if v.lookup:
                entry["lookup"] = dict(v.lookup)
            out.append(entry)
        return {"variables": out}

    @classmethod
    def from_dict(cls, payload: dict) -> "DatasetSchema":
        try:
            specs = tuple(
                VariableSpec(
                    name=str(v["name"]),
                    kind=str(v["kind"]),
                    min=v["min"],
                    max=v["max"],
                    lookup={str(k): int(c) for k, c in v["lookup"].items()} if v.get("lookup") else None,
                )
                for v in payload["variables"]
            )
        except (KeyError, TypeError, AttributeError) as exc:
            raise SchemaError(f"malformed schema: {exc}") from exc
        return cls(specs)


def load_schema(path: str | Path | None = None) -> DatasetSchema:
    """Read a JSON schema file; ``None`` returns the bundled reference schema."""
    if path is None:
        text = resources.files("gaimpute.data").joinpath("hiv_schema.json").read_text()
    else:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise SchemaError(f"cannot read schema {path}: {exc}") from exc
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"schema is not valid JSON: {exc}") from exc
    return DatasetSchema.from_dict(payload)


def default_schema() -> DatasetSchema:
    return load_schema(None)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class DataMatrix:
    values: np.ndarray
    mask: np.ndarray
    space: str = RAW

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values.reshape(1, -1) if values.size else values.reshape(0, 0)
        mask = np.asarray(self.mask, dtype=bool).reshape(values.shape)
        if self.space not in (RAW, NORMALIZED, COMPONENT):
            raise DataError(f"unknown space tag {self.space!r}")
        values = np.where(mask, values, np.nan)
        object.__setattr__(self, "values", _frozen(values))
        object.__setattr__(self, "mask", _frozen(mask))

    @classmethod
    def complete(cls, values, space: str = RAW) -> "DataMatrix":
        values = np.atleast_2d(np.asarray(values, dtype=float))
        return cls(values, np.ones(values.shape, dtype=bool), space)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def complete_rows(self) -> np.ndarray:
        return self.mask.all(axis=1)

    def rows(self, index) -> "DataMatrix":
        return DataMatrix(self.values[index], self.mask[index], self.space)


def _check_width(data: DataMatrix, schema: DatasetSchema) -> None:
    if data.shape[1] != schema.width:
        raise DataError(f"matrix has {data.shape[1]} columns, schema has {schema.width}")


def _parse_cell(text: str, spec: VariableSpec) -> float | None:
    text = text.strip()
    if text == "":
        return None
    if spec.lookup and text in spec.lookup:
        return float(spec.lookup[text])
    try:
        value = float(text)
    except ValueError:
        return None
    return value if math.isfinite(value) else None


def load_csv(path: str | Path, schema: DatasetSchema) -> DataMatrix:
    """Parse a UTF-8 CSV whose header lists the schema names in order.

    Empty, unparseable and unknown-category cells become missing; unknown
    categories are logged with their row and column.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise SchemaError(f"{path}: empty file, expected a header row")
        header = [h.strip() for h in header]
        for pos, expected in enumerate(schema.names):
            got = header[pos] if pos < len(header) else "<missing>"
            if got != expected:
                raise SchemaError(f"{path}: header column {pos + 1} is {got!r}, expected {expected!r}")
        if len(header) > schema.width:
            raise SchemaError(f"{path}: unexpected extra column {header[schema.width]!r}")

        values, mask = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            row = (row + [""] * schema.width)[: schema.width]
            vals, present = [], []
            for spec, cell in zip(schema.variables, row):
                parsed = _parse_cell(cell, spec)
                if parsed is None and cell.strip() and spec.lookup:
                    log.warning("%s:%d: %r is not a known %s category", path, lineno, cell, spec.name)
                vals.append(np.nan if parsed is None else parsed)
                present.append(parsed is not None)
            values.append(vals)
            mask.append(present)
    values = np.array(values, dtype=float).reshape(-1, schema.width)
    return DataMatrix(values, np.array(mask, dtype=bool).reshape(values.shape), RAW)


def _format_value(value: float, spec: VariableSpec, space: str) -> str:
    if space == RAW and spec.discrete:
        code = int(round(value))
        if spec.lookup:
            for label, c in spec.lookup.items():
                if c == code:
                    return label
        return str(code)
    return repr(float(value))


def write_csv(path: str | Path, data: DataMatrix, schema: DatasetSchema) -> None:
    """Write ``data`` with a schema header; missing cells are left empty.

    Raw discrete columns are written as integer codes (or lookup labels).
    """
    _check_width(data, schema)
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(schema.names)
        for vals, present in zip(data.values, data.mask):
            writer.writerow(
                _format_value(v, spec, data.space) if p else ""
                for v, p, spec in zip(vals, present, schema.variables)
            )


def screen_outliers(data: DataMatrix, schema: DatasetSchema) -> tuple[DataMatrix, dict[str, int]]:
    """Mask present cells outside their closed schema range; rows are kept."""
    if data.space != RAW:
        raise DataError("screen_outliers expects raw-space data")
    _check_width(data, schema)
    with np.errstate(invalid="ignore"):
        bad = data.mask & ((data.values < schema.lows) | (data.values > schema.highs))
    report = {name: int(n) for name, n in zip(schema.names, bad.sum(axis=0))}
    return DataMatrix(data.values, data.mask & ~bad, RAW), report


def normalize(data: DataMatrix, schema: DatasetSchema) -> DataMatrix:
    if data.space != RAW:
        raise DataError("normalize expects raw-space data")
    _check_width(data, schema)
    lows, highs = schema.lows, schema.highs
    with np.errstate(invalid="ignore"):
        outside = data.mask & ((data.values < lows) | (data.values > highs))
    if outside.any():
        r, c = np.argwhere(outside)[0]
        raise DataError(
            f"row {r}, column {schema.names[c]!r}: value {data.values[r, c]} outside schema range "
            "(run screen_outliers first)"
        )
    return DataMatrix((data.values - lows) / (highs - lows), data.mask, NORMALIZED)


def round_half_up(values):
    return np.floor(np.asarray(values, dtype=float) + 0.5)


def denormalize(data: DataMatrix, schema: DatasetSchema) -> DataMatrix:
    """Inverse of :func:`normalize`; discrete columns are rounded half-up and clamped."""
    if data.space != NORMALIZED:
        raise DataError("denormalize expects normalized data")
    _check_width(data, schema)
    lows, highs = schema.lows, schema.highs
    raw = data.values * (highs - lows) + lows
    discrete = np.array([v.discrete for v in schema.variables])
    raw[:, discrete] = np.clip(round_half_up(raw[:, discrete]), lows[discrete], highs[discrete])
    return DataMatrix(raw, data.mask, RAW)


class Partition(NamedTuple):
    train: DataMatrix
    validation: DataMatrix
    test: DataMatrix
    impute: DataMatrix


def partition(data: DataMatrix, fractions: Sequence[float] = (0.60, 0.15, 0.25), seed: int = 0) -> Partition:
    """Shuffle the complete rows and split them; incomplete rows go to ``impute``.

    Validation and test get ``floor(n * f)`` rows, training takes the rest.
    """
    if len(fractions) != 3 or any(f < 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        raise DataError(f"fractions must be three nonnegative numbers summing to 1, got {fractions}")
    complete = np.flatnonzero(data.complete_rows)
    if complete.size == 0:
        raise DataError("no complete rows to partition")
    order = complete[np.random.default_rng(seed).permutation(complete.size)]
    n = complete.size
    n_val = math.floor(n * fractions[1] + 1e-9)
    n_test = math.floor(n * fractions[2] + 1e-9)
    n_train = n - n_val - n_test
    return Partition(
        data.rows(order[:n_train]),
        data.rows(order[n_train : n_train + n_val]),
        data.rows(order[n_train + n_val :]),
        data.rows(np.flatnonzero(~data.complete_rows)),
    )


def ampute(
    data: DataMatrix,
    schema: DatasetSchema,
    target_variables: Sequence[str],
    per_row_count: int,
    seed: int,
) -> tuple[DataMatrix, DataMatrix]:
    """Remove ``per_row_count`` distinct target cells per row, completely at random.

    Returns ``(amputed, ground_truth)``; ``ground_truth`` is the untouched
    input, so the removed cells are ``ground_truth.mask & ~amputed.mask``.
    """
    if not data.mask.all():
        raise DataError("ampute expects fully observed data")
    cols = np.array([schema.index(name) for name in target_variables], dtype=int)
    if per_row_count > cols.size:
        raise DataError(f"per_row_count={per_row_count} exceeds {cols.size} target variables")
    rng = np.random.default_rng(seed)
    removed = np.zeros(data.shape, dtype=bool)
    if per_row_count > 0:
        # argsort of uniform keys = an independent random permutation per row
        picks = np.argsort(rng.random((data.n_rows, cols.size)), axis=1)[:, :per_row_count]
        rows = np.repeat(np.arange(data.n_rows), per_row_count)
        removed[rows, cols[picks].ravel()] = True
    return DataMatrix(data.values, ~removed, data.space), data


_REFERENCE_NAMES = (
    "HIV Status", "Education", "Age Group", "Age Gap", "Gravidity", "Parity",
    "Race", "Province", "Region", "RPR", "WTREV",
)

AGE_BETA = (2.0, 4.0)
GRAVIDITY_BASE = 0.5
GRAVIDITY_SLOPE = 0.15
PARITY_LOSS = 0.2
HIV_EDU_WEIGHT = 0.5
HIV_NOISE = 0.05
HIV_THRESHOLD = 0.1


def _uniform_column(rng, spec: VariableSpec, n: int) -> np.ndarray:
    if spec.discrete:
        return rng.integers(int(spec.min), int(spec.max) + 1, size=n).astype(float)
    return rng.uniform(spec.min, spec.max, size=n)


def synthesize(schema: DatasetSchema, n: int, seed: int) -> DataMatrix:
    """Generate ``n`` schema-valid raw records (see the module docstring)."""
    if n <= 0:
        raise DataError("n must be positive")
    rng = np.random.default_rng(seed)
    if tuple(schema.names) != _REFERENCE_NAMES:
        cols = [_uniform_column(rng, spec, n) for spec in schema.variables]
        return DataMatrix.complete(np.column_stack(cols))

    specs = {v.name: v for v in schema.variables}
    age = 14 + round_half_up(46 * rng.beta(*AGE_BETA, size=n))
    education = rng.integers(0, 14, size=n).astype(float)
    gravidity = np.minimum(rng.poisson(GRAVIDITY_BASE + GRAVIDITY_SLOPE * (age - 14)), 11).astype(float)
    parity = gravidity - rng.binomial(gravidity.astype(int), PARITY_LOSS)
    score = (age - 14) / 46 - HIV_EDU_WEIGHT * education / 13 + rng.normal(0.0, HIV_NOISE, size=n)
    hiv = (score > HIV_THRESHOLD).astype(float)
    rest = {
        name: _uniform_column(rng, specs[name], n)
        for name in ("Age Gap", "Race", "Province", "Region", "RPR", "WTREV")
    }
    columns = {
        "HIV Status": hiv, "Education": education, "Age Group": age,
        "Gravidity": gravidity, "Parity": parity, **rest,
    }
    return DataMatrix.complete(np.column_stack([columns[name] for name in _REFERENCE_NAMES]))
