"""Command-line entry point: ``gaimpute {synth,prepare,train,impute,evaluate}``.

Exit status: 0 success, 2 configuration error, 3 data error (including
corrupt or mismatched artifacts), 4 numerical failure, 5 nothing to impute.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import dataset as ds
from . import imputer, mlp, serialization
from .errors import ConfigError, DataError, GaImputeError, NumericalError
from .evaluation import DEFAULT_TOLERANCES, run_benchmark
from .ga import GaConfig
from .parallel import default_workers
from .pipeline import train_backend

log = logging.getLogger("gaimpute")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4
EXIT_NOTHING_MISSING = 5

PARTITIONS = ("train", "validation", "test", "impute")


@dataclass
class RunConfig:
    schema: str | None = None
    variant: str = imputer.ANNGA
    hidden_count: int | None = None  # None: 10 / 10 / 9 for ANNGA / PCANNGA-11 / PCANNGA-10
    hidden_candidates: list[int] | None = None
    hidden_repeats: int = 1
    max_cycles: int = 1000
    patience: int = 50
    weight_init_scale: float | None = None
    pca_k: int | None = None  # None: d for PCANNGA-11, d - 1 for PCANNGA-10
    svr_width_bounds: list[float] = field(default_factory=lambda: [-2.0, 2.0])
    svr_regularization_bounds: list[float] = field(default_factory=lambda: [-2.0, 6.0])
    svr_subsample: int = 3000
    svr_population: int = 20
    svr_generations: int = 20
    population: int = 50
    generations: int = 50
    selection_q: float = 0.08
    mutation_b: float = 3.0
    crossover_count: int | None = None
    mutation_count: int | None = None
    seed: int = 0
    fractions: list[float] = field(default_factory=lambda: [0.60, 0.15, 0.25])
    target_variables: list[str] = field(default_factory=lambda: list(ds.DEFAULT_TARGETS))
    tolerances: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    runs: int = 3
    records_per_run: int = 1000
    synth_n: int = 12750
    workers: int | None = None
    out_dir: str = "out"

    # keys that do not influence any artifact's content
    _UNHASHED = ("workers", "out_dir")

    @classmethod
    def from_mapping(cls, mapping: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(mapping) - known)
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
        try:
            config = cls(**mapping)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
        config.validate()
        return config

    @classmethod
    def load(cls, path: str | None, overrides: dict) -> "RunConfig":
        mapping = {}
        if path:
            try:
                mapping = json.loads(Path(path).read_text(encoding="utf-8"))
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError(f"cannot read config {path}: {exc}") from exc
            if not isinstance(mapping, dict):
                raise ConfigError("config file must hold a JSON object")
        mapping.update({k: v for k, v in overrides.items() if v is not None})
        return cls.from_mapping(mapping)

    def validate(self) -> None:
        if self.variant not in imputer.VARIANTS:
            raise ConfigError(f"variant must be one of {', '.join(imputer.VARIANTS)}")
        if len(self.fractions) != 3 or abs(sum(self.fractions) - 1.0) > 1e-9:
            raise ConfigError("fractions must be three numbers summing to 1")
        for name in ("max_cycles", "patience", "runs", "records_per_run", "synth_n", "svr_subsample", "hidden_repeats"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be at least 1")
        self.ga()
        self.train_config()

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in dataclasses.fields(self)}

    def hash(self) -> str:
        content = {k: v for k, v in self.as_dict().items() if k not in self._UNHASHED}
        return serialization.digest(content)

    def ga(self) -> GaConfig:
        try:
            return GaConfig(
                self.population, self.generations, self.selection_q, self.mutation_b,
                self.crossover_count, self.mutation_count, self.seed,
            )
        except GaImputeError as exc:
            raise ConfigError(str(exc)) from exc

    def svr_ga(self) -> GaConfig:
        return self.ga().replace(population_size=self.svr_population, generations=self.svr_generations,
                                 crossover_count=None, mutation_count=None)

    def train_config(self) -> mlp.TrainConfig:
        try:
            return mlp.TrainConfig(self.max_cycles, self.patience, self.seed, self.weight_init_scale)
        except GaImputeError as exc:
            raise ConfigError(str(exc)) from exc

    def n_workers(self) -> int:
        return default_workers() if self.workers is None else self.workers

    def load_schema(self) -> ds.DatasetSchema:
        return ds.load_schema(self.schema)


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _echo_config(out: Path, config: RunConfig) -> None:
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "config.json", {**config.as_dict(), "config_hash": config.hash()})


def _read_json(path: Path) -> dict:
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc


def cmd_synth(config: RunConfig, output: str | None = None) -> Path:
    schema = config.load_schema()
    out = Path(config.out_dir)
    _echo_config(out, config)
    path = Path(output) if output else out / "synthetic.csv"
    ds.write_csv(path, ds.synthesize(schema, config.synth_n, config.seed), schema)
    log.info("wrote %d synthetic records to %s", config.synth_n, path)
    return path


def cmd_prepare(config: RunConfig, input_csv: str) -> Path:
    schema = config.load_schema()
    raw = ds.load_csv(input_csv, schema)
    screened, flips = ds.screen_outliers(raw, schema)
    normalized = ds.normalize(screened, schema)
    parts = ds.partition(normalized, config.fractions, config.seed)
    out = Path(config.out_dir)
    _echo_config(out, config)
    for name, part in zip(PARTITIONS, parts):
        ds.write_csv(out / f"{name}.csv", part, schema)
    report = {
        "config_hash": config.hash(),
        "input_rows": raw.n_rows,
        "complete_rows": int(normalized.complete_rows.sum()),
        "outlier_flips": flips,
        "partition_rows": {name: part.n_rows for name, part in zip(PARTITIONS, parts)},
        "schema": schema.to_dict(),
    }
    _write_json(out / "prepare_report.json", report)
    log.info("prepared %s", report["partition_rows"])
    return out


def _load_partition(prepared: Path, name: str, schema: ds.DatasetSchema) -> ds.DataMatrix:
    matrix = ds.load_csv(prepared / f"{name}.csv", schema)
    return ds.DataMatrix(matrix.values, matrix.mask, ds.NORMALIZED)


def _prepared_hash(prepared: Path) -> str:
    return _read_json(prepared / "prepare_report.json")["config_hash"]


def cmd_train(config: RunConfig, prepared: str | None = None) -> Path:
    schema = config.load_schema()
    prepared = Path(prepared or config.out_dir)
    train = _load_partition(prepared, "train", schema)
    validation = _load_partition(prepared, "validation", schema)
    backend, report = train_backend(
        config.variant, schema, train, validation,
        hidden_count=config.hidden_count,
        train_config=config.train_config(),
        pca_k=config.pca_k,
        hidden_candidates=config.hidden_candidates,
        hidden_repeats=config.hidden_repeats,
        svr_ga=config.svr_ga(),
        svr_bounds=(config.svr_width_bounds, config.svr_regularization_bounds),
        svr_subsample=config.svr_subsample,
        workers=config.n_workers(),
    )
    metadata = {"config_hash": config.hash(), "prepared_hash": _prepared_hash(prepared)}
    backend = dataclasses.replace(backend, metadata=metadata)
    out = Path(config.out_dir)
    _echo_config(out, config)
    imputer.save_backend(out / "backend.json", backend)
    _write_json(out / "train_report.json", {**report, **metadata})
    return out / "backend.json"


def _load_backend(path: str, schema: ds.DatasetSchema) -> imputer.RecallBackend:
    backend = imputer.load_backend(path)
    if backend.schema.to_dict() != schema.to_dict():
        raise DataError(f"{path}: backend was trained on a different schema ({backend.d} columns)")
    return backend


def cmd_impute(config: RunConfig, backend_path: str, input_csv: str, output: str | None = None, verbose=False) -> int:
    schema = config.load_schema()
    backend = _load_backend(backend_path, schema)
    raw = ds.load_csv(input_csv, schema)
    screened, flips = ds.screen_outliers(raw, schema)
    out_path = Path(output) if output else Path(config.out_dir) / "imputed.csv"
    out_path.parent.mkdir(parents=True, exist_ok=True)
    if screened.mask.all():
        ds.write_csv(out_path, raw, schema)
        log.info("nothing was missing; %s is a copy of the input", out_path)
        return EXIT_NOTHING_MISSING
    normalized = ds.normalize(screened, schema)
    trace_file = out_path.with_suffix(".trace.jsonl").open("w", encoding="utf-8") if verbose else None
    try:
        completed, diagnostics = imputer.impute_dataset(
            backend, normalized, config.ga(), config.seed, workers=config.n_workers(), trace=trace_file
        )
    finally:
        if trace_file:
            trace_file.close()
    filled = ds.denormalize(completed, schema).values
    values = np.where(screened.mask, screened.values, filled)
    ds.write_csv(out_path, ds.DataMatrix.complete(values), schema)
    with out_path.with_suffix(".diagnostics.jsonl").open("w", encoding="utf-8") as fh:
        for diag in diagnostics:
            for j in diag.missing_indices:
                fh.write(json.dumps({
                    "row": diag.row,
                    "variable": schema.names[j],
                    "imputed_value": float(values[diag.row, j]),
                    "best_fitness": diag.best_fitness,
                }, sort_keys=True) + "\n")
    log.info("imputed %d records (%d range outliers masked) into %s", len(diagnostics), sum(flips.values()), out_path)
    return EXIT_OK


def cmd_evaluate(config: RunConfig, backend_path: str, prepared: str | None = None) -> Path:
    schema = config.load_schema()
    backend = _load_backend(backend_path, schema)
    prepared = Path(prepared or config.out_dir)
    if backend.metadata.get("prepared_hash") not in (None, _prepared_hash(prepared)):
        raise ConfigError(f"{backend_path} was trained on a different preparation than {prepared}")
    pool = _load_partition(prepared, "test", schema)
    report = run_benchmark(
        backend, pool, config.runs, config.records_per_run, config.target_variables,
        config.ga(), config.seed, config.tolerances, schema, workers=config.n_workers(),
    )
    report.metadata["config_hash"] = config.hash()
    out = Path(config.out_dir)
    _echo_config(out, config)
    stem = f"report_{backend.variant}"
    (out / f"{stem}.txt").write_text(report.to_text(), encoding="utf-8")
    (out / f"{stem}.jsonl").write_text(report.to_jsonl(), encoding="utf-8")
    _write_json(out / f"{stem}_metadata.json", report.metadata)
    print(report.to_text(), end="")
    return out / f"{stem}.txt"


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file; flags override its values")
    common.add_argument("--seed", type=int)
    common.add_argument("--out-dir", dest="out_dir")
    common.add_argument("--workers", type=int, help="worker processes (default: all cores)")
    common.add_argument("--verbose", action="store_true", help="info logging and GA trace files")

    parser = argparse.ArgumentParser(
        prog="gaimpute",
        description="Missing-data imputation with recall models and a genetic algorithm.",
        epilog="exit status: 0 ok, 2 config error, 3 data error, 4 numerical failure, 5 nothing to impute",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="write a synthetic survey CSV")
    p.add_argument("--n", type=int, dest="synth_n")
    p.add_argument("-o", "--output")

    p = sub.add_parser("prepare", parents=[common], help="screen, normalize and partition a CSV")
    p.add_argument("input")

    p = sub.add_parser("train", parents=[common], help="train a recall backend")
    p.add_argument("--prepared", help="directory written by prepare (default: --out-dir)")
    p.add_argument("--variant", choices=imputer.VARIANTS)

    p = sub.add_parser("impute", parents=[common], help="fill missing cells of a CSV")
    p.add_argument("--backend", required=True)
    p.add_argument("input")
    p.add_argument("-o", "--output")

    p = sub.add_parser("evaluate", parents=[common], help="run the amputation benchmark")
    p.add_argument("--backend", required=True)
    p.add_argument("--prepared", help="directory written by prepare (default: --out-dir)")
    p.add_argument("--runs", type=int)
    p.add_argument("--records-per-run", type=int, dest="records_per_run")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    overrides = {
        key: getattr(args, key, None)
        for key in ("seed", "out_dir", "workers", "synth_n", "variant", "runs", "records_per_run")
    }
    try:
        config = RunConfig.load(args.config, overrides)
        if args.command == "synth":
            cmd_synth(config, args.output)
        elif args.command == "prepare":
            cmd_prepare(config, args.input)
        elif args.command == "train":
            cmd_train(config, args.prepared)
        elif args.command == "impute":
            return cmd_impute(config, args.backend, args.input, args.output, args.verbose)
        elif args.command == "evaluate":
            cmd_evaluate(config, args.backend, args.prepared)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except GaImputeError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
