"""Real-coded genetic algorithm (maximisation).

Operators: normalized geometric ranking selection, single-cut simple
crossover, and non-uniform mutation.  The best individual is always carried
into the next generation, so the best-so-far fitness never decreases.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, DataError


@dataclass(frozen=True)
class GaConfig:
    population_size: int = 50
    generations: int = 50
    selection_q: float = 0.08
    mutation_b: float = 3.0
    crossover_count: int | None = None  # children per generation, default floor(0.6 P)
    mutation_count: int | None = None  # mutants per generation, default floor(0.1 P)
    seed: int = 0

    def __post_init__(self):
        if self.population_size < 2:
            raise ConfigError("population_size must be at least 2")
        if self.generations < 1:
            raise ConfigError("generations must be at least 1")
        if not 0.0 < self.selection_q < 1.0:
            raise ConfigError("selection_q must lie in (0, 1)")
        if self.mutation_b <= 0:
            raise ConfigError("mutation_b must be positive")
        if self.n_crossover + self.n_mutation > self.population_size - 1:
            raise ConfigError("crossover and mutation counts exceed the population (one slot is the elite)")

    @property
    def elitism(self) -> bool:
        return True

    @property
    def n_crossover(self) -> int:
        count = self.crossover_count if self.crossover_count is not None else math.floor(0.6 * self.population_size)
        return count - count % 2

    @property
    def n_mutation(self) -> int:
        return self.mutation_count if self.mutation_count is not None else math.floor(0.1 * self.population_size)

    def replace(self, **changes) -> "GaConfig":
        return GaConfig(**{**self.__dict__, **changes})


@dataclass
class Individual:
    genes: np.ndarray
    fitness: float | None = None


def geometric_rank_probabilities(size: int, q: float) -> np.ndarray:
    """Selection probability of rank 1 (best) .. rank ``size``."""
    q_norm = q / (1.0 - (1.0 - q) ** size)
    return q_norm * (1.0 - q) ** np.arange(size)


def _ranked(fitness: np.ndarray) -> np.ndarray:
    # stable: equal fitnesses keep their population order
    return np.argsort(-fitness, kind="stable")


def select_indices(fitness, q: float, rng: np.random.Generator, size: int) -> np.ndarray:
    fitness = np.asarray(fitness, dtype=float)
    if np.isnan(fitness).any():
        raise DataError("population contains unevaluated fitness")
    cdf = np.cumsum(geometric_rank_probabilities(fitness.size, q))
    ranks = np.minimum(np.searchsorted(cdf, rng.random(size), side="right"), fitness.size - 1)
    return _ranked(fitness)[ranks]


def normalized_geometric_select(population: Sequence[Individual], q: float, rng: np.random.Generator) -> Individual:
    if any(ind.fitness is None for ind in population):
        raise DataError("population contains unevaluated fitness")
    fitness = np.array([ind.fitness for ind in population], dtype=float)
    return population[int(select_indices(fitness, q, rng, 1)[0])]


def simple_crossover(a: Individual, b: Individual, rng: np.random.Generator, cut: int | None = None):
    """Swap the tails of two parents after a cut drawn from 1..n-1."""
    ga, gb = np.asarray(a.genes, dtype=float), np.asarray(b.genes, dtype=float)
    if ga.shape != gb.shape or ga.ndim != 1 or ga.size < 1:
        raise DataError("crossover needs two gene vectors of equal length")
    n = ga.size
    if n == 1:
        return Individual(ga.copy(), a.fitness), Individual(gb.copy(), b.fitness)
    if cut is None:
        cut = int(rng.integers(1, n))
    return (
        Individual(np.concatenate([ga[:cut], gb[cut:]])),
        Individual(np.concatenate([gb[:cut], ga[cut:]])),
    )


def nonuniform_delta(y, generation: int, max_generations: int, b: float, u):
    return y * (1.0 - u ** ((1.0 - generation / max_generations) ** b))


def nonuniform_mutate(x: Individual, generation: int, max_generations: int, b: float, bounds, rng: np.random.Generator) -> Individual:
    """Move one random gene toward a random bound by a shrinking fraction of the gap."""
    if not 0 <= generation <= max_generations:
        raise DataError("generation must lie in [0, max_generations]")
    genes = np.array(x.genes, dtype=float)
    low, high = _bounds(bounds, genes.size)
    j = int(rng.integers(genes.size))
    toward_high = rng.random() < 0.5
    u = rng.random()
    if toward_high:
        genes[j] = min(genes[j] + nonuniform_delta(high[j] - genes[j], generation, max_generations, b, u), high[j])
    else:
        genes[j] = max(genes[j] - nonuniform_delta(genes[j] - low[j], generation, max_generations, b, u), low[j])
    return Individual(genes)


def _bounds(bounds, n: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    b = np.asarray(bounds, dtype=float).reshape(-1, 2)
    if n is not None and b.shape[0] != n:
        raise DataError(f"expected {n} gene bounds, got {b.shape[0]}")
    return b[:, 0], b[:, 1]


@dataclass
class GaResult:
    best: Individual
    history: list[float]
    generations: int


def run_ga(
    fitness: Callable,
    bounds,
    config: GaConfig,
    initial_injections=None,
    vectorized: bool = False,
    trace=None,
    trace_tag: dict | None = None,
) -> GaResult:
    """Maximise ``fitness`` over the box ``bounds`` (one ``[low, high]`` per gene).

    With ``vectorized=True`` the fitness receives an (m, n) array of gene rows
    and returns m values.  Non-finite fitness counts as ``-inf``.  ``trace``,
    if given, is a text stream that receives one JSON line per generation.
    """
    low, high = _bounds(bounds)
    if not (np.all(np.isfinite(low)) and np.all(np.isfinite(high)) and np.all(low < high)):
        raise DataError("gene bounds must be finite with low < high")
    n = low.size
    P = config.population_size
    rng = np.random.default_rng(config.seed)

    def evaluate(rows: np.ndarray) -> np.ndarray:
        if rows.shape[0] == 0:
            return np.empty(0)
        if vectorized:
            out = np.asarray(fitness(rows), dtype=float).reshape(rows.shape[0])
        else:
            out = np.array([float(fitness(r)) for r in rows])
        return np.where(np.isfinite(out), out, -np.inf)

    pop = low + (high - low) * rng.random((P, n))
    if initial_injections is not None:
        inject = np.atleast_2d(np.asarray(initial_injections, dtype=float))[:P]
        if inject.size:
            if inject.shape[1] != n:
                raise DataError("injected candidates have the wrong gene count")
            pop[: inject.shape[0]] = np.clip(inject, low, high)
    fit = evaluate(pop)

    history = [float(fit.max())]
    _trace(trace, 0, fit, trace_tag)
    n_cross, n_mut = config.n_crossover, config.n_mutation
    n_copy = P - 1 - n_cross - n_mut
    G = config.generations
    for g in range(1, G + 1):
        elite = int(_ranked(fit)[0])
        parents = select_indices(fit, config.selection_q, rng, n_cross + n_mut + n_copy)
        new_pop = np.empty_like(pop)
        new_fit = np.full(P, np.nan)
        new_pop[0], new_fit[0] = pop[elite], fit[elite]
        slot = 1
        for i in range(0, n_cross, 2):
            a = Individual(pop[parents[i]], fit[parents[i]])
            b = Individual(pop[parents[i + 1]], fit[parents[i + 1]])
            c1, c2 = simple_crossover(a, b, rng)
            new_pop[slot], new_pop[slot + 1] = c1.genes, c2.genes
            if c1.fitness is not None:
                new_fit[slot], new_fit[slot + 1] = c1.fitness, c2.fitness
            slot += 2
        for i in range(n_cross, n_cross + n_mut):
            mutant = nonuniform_mutate(Individual(pop[parents[i]]), g, G, config.mutation_b, bounds, rng)
            new_pop[slot] = mutant.genes
            slot += 1
        for i in range(n_cross + n_mut, n_cross + n_mut + n_copy):
            new_pop[slot], new_fit[slot] = pop[parents[i]], fit[parents[i]]
            slot += 1
        if np.any(new_pop < low) or np.any(new_pop > high):
            raise AssertionError("GA produced an out-of-bounds individual")
        todo = np.isnan(new_fit)
        new_fit[todo] = evaluate(new_pop[todo])
        pop, fit = new_pop, new_fit
        history.append(float(fit.max()))
        _trace(trace, g, fit, trace_tag)

    best = int(_ranked(fit)[0])
    return GaResult(Individual(pop[best].copy(), float(fit[best])), history, G)


def _trace(stream, generation: int, fit: np.ndarray, tag=None) -> None:
    if stream is None:
        return
    finite = fit[np.isfinite(fit)]
    record = {
        **(tag or {}),
        "generation": generation,
        "best_fitness": float(fit.max()),
        "mean_fitness": float(finite.mean()) if finite.size else None,
    }
    stream.write(json.dumps(record) + "\n")
