import io
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gaimpute import ga
from gaimpute.errors import ConfigError, DataError


def test_geometric_probabilities_examples():
    np.testing.assert_allclose(ga.geometric_rank_probabilities(2, 0.5), [2 / 3, 1 / 3], rtol=1e-15)
    np.testing.assert_allclose(ga.geometric_rank_probabilities(4, 1 - 1e-12), [1, 0, 0, 0], atol=1e-9)


@settings(max_examples=50, deadline=None)
@given(size=st.integers(1, 300), q=st.floats(1e-4, 0.999))
def test_geometric_probabilities_sum_to_one_and_decrease(size, q):
    p = ga.geometric_rank_probabilities(size, q)
    assert p.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.all(np.diff(p) <= 0)


def test_selection_frequencies_match_rank_probabilities():
    fitness = np.array([0.3, 2.0, -1.0, 1.0, 0.0])
    rng = np.random.default_rng(0)
    n = 200_000
    counts = np.bincount(ga.select_indices(fitness, 0.3, rng, n), minlength=5) / n
    expected = ga.geometric_rank_probabilities(5, 0.3)[np.argsort(np.argsort(-fitness))]
    np.testing.assert_allclose(counts, expected, atol=5e-3)


def test_selection_ties_are_stable_and_nan_rejected():
    ranks = ga.select_indices(np.zeros(3), 0.999999, np.random.default_rng(0), 20)
    assert np.all(ranks == 0)
    with pytest.raises(DataError):
        ga.select_indices([1.0, np.nan], 0.1, np.random.default_rng(0), 1)
    with pytest.raises(DataError):
        ga.normalized_geometric_select([ga.Individual(np.zeros(1))], 0.1, np.random.default_rng(0))


def test_crossover_examples():
    a, b = ga.Individual(np.array([1.0, 2, 3, 4])), ga.Individual(np.array([5.0, 6, 7, 8]))
    c1, c2 = ga.simple_crossover(a, b, None, cut=2)
    np.testing.assert_array_equal(c1.genes, [1, 2, 7, 8])
    np.testing.assert_array_equal(c2.genes, [5, 6, 3, 4])
    s1, s2 = ga.simple_crossover(ga.Individual(np.array([0.2]), -1.0), ga.Individual(np.array([0.7]), -2.0), None)
    assert (s1.genes[0], s1.fitness, s2.genes[0], s2.fitness) == (0.2, -1.0, 0.7, -2.0)
    with pytest.raises(DataError):
        ga.simple_crossover(a, ga.Individual(np.zeros(3)), None)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**31), n=st.integers(2, 12))
def test_crossover_conserves_genes(seed, n):
    rng = np.random.default_rng(seed)
    a, b = ga.Individual(rng.random(n)), ga.Individual(rng.random(n))
    c1, c2 = ga.simple_crossover(a, b, rng)
    np.testing.assert_array_equal(c1.genes + c2.genes, a.genes + b.genes)
    assert 1 <= int(np.sum(c1.genes != a.genes)) <= n - 1 or np.any(a.genes == b.genes)


def test_nonuniform_delta_examples():
    assert ga.nonuniform_delta(0.5, 10, 10, 3.0, 0.3) == 0.0
    assert ga.nonuniform_delta(0.5, 0, 10, 3.0, 0.0) == 0.5
    assert ga.nonuniform_delta(0.5, 3, 10, 3.0, 1.0) == 0.0


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**31), g=st.integers(0, 20))
def test_mutation_respects_bounds_and_changes_one_gene(seed, g):
    rng = np.random.default_rng(seed)
    x = ga.Individual(rng.random(4))
    m = ga.nonuniform_mutate(x, g, 20, 3.0, [[0, 1]] * 4, rng)
    assert np.all((m.genes >= 0) & (m.genes <= 1))
    assert np.count_nonzero(m.genes != x.genes) <= 1


def test_mutation_at_final_generation_is_identity_and_at_bound_stays():
    rng = np.random.default_rng(1)
    x = ga.Individual(np.array([0.3, 0.6]))
    np.testing.assert_array_equal(ga.nonuniform_mutate(x, 5, 5, 3.0, [[0, 1]] * 2, rng).genes, x.genes)
    edge = ga.Individual(np.array([1.0]))
    for _ in range(20):
        assert 0.0 <= ga.nonuniform_mutate(edge, 0, 5, 3.0, [[0, 1]], rng).genes[0] <= 1.0
    with pytest.raises(DataError):
        ga.nonuniform_mutate(x, 6, 5, 3.0, [[0, 1]] * 2, rng)


def test_config_validation():
    with pytest.raises(ConfigError):
        ga.GaConfig(population_size=1)
    with pytest.raises(ConfigError):
        ga.GaConfig(selection_q=1.0)
    with pytest.raises(ConfigError):
        ga.GaConfig(population_size=10, crossover_count=8, mutation_count=2)
    c = ga.GaConfig(population_size=50)
    assert (c.n_crossover, c.n_mutation, c.elitism) == (30, 5, True)
    assert ga.GaConfig(population_size=5).n_crossover == 2


def test_run_ga_finds_quadratic_optimum():
    res = ga.run_ga(lambda x: -float(np.sum((x - 0.3) ** 2)), [[0, 1]] * 3, ga.GaConfig(seed=4))
    np.testing.assert_allclose(res.best.genes, 0.3, atol=0.02)
    assert res.best.fitness == pytest.approx(-float(np.sum((res.best.genes - 0.3) ** 2)))
    assert len(res.history) == 51 and res.generations == 50


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_best_fitness_never_decreases(seed):
    target = np.random.default_rng(seed).random(2)
    res = ga.run_ga(lambda x: -np.sum((x - target) ** 2, axis=1), [[0, 1]] * 2,
                    ga.GaConfig(population_size=12, generations=15, seed=seed), vectorized=True)
    assert np.all(np.diff(res.history) >= 0)


def test_injected_candidate_survives():
    best = np.array([0.123, 0.987])
    fit = lambda x: 0.0 if np.allclose(x, best) else -1.0 - float(np.sum(x))
    res = ga.run_ga(fit, [[0, 1]] * 2, ga.GaConfig(population_size=10, generations=5), initial_injections=[best])
    np.testing.assert_array_equal(res.best.genes, best)
    assert res.history[0] == 0.0


def test_determinism_bounds_and_vectorized_equivalence():
    f = lambda x: -float(np.sum(np.abs(x - 0.8)))
    fv = lambda X: -np.sum(np.abs(X - 0.8), axis=1)
    bounds = [[-1, 2], [0, 0.5], [3, 4]]
    cfg = ga.GaConfig(population_size=20, generations=10, seed=9)
    a, b = ga.run_ga(f, bounds, cfg), ga.run_ga(f, bounds, cfg)
    c = ga.run_ga(fv, bounds, cfg, vectorized=True)
    assert a.best.genes.tobytes() == b.best.genes.tobytes() == c.best.genes.tobytes()
    assert a.history == c.history
    lo, hi = np.array(bounds).T
    assert np.all((a.best.genes >= lo) & (a.best.genes <= hi))


def test_non_finite_fitness_is_worst():
    f = lambda x: np.nan if x[0] > 0.5 else -x[0]
    res = ga.run_ga(f, [[0, 1]], ga.GaConfig(population_size=10, generations=10))
    assert res.best.genes[0] <= 0.5 and np.isfinite(res.best.fitness)


def test_bad_bounds_rejected():
    with pytest.raises(DataError):
        ga.run_ga(lambda x: 0.0, [[1, 1]], ga.GaConfig())
    with pytest.raises(DataError):
        ga.run_ga(lambda x: 0.0, [[0, np.inf]], ga.GaConfig())


def test_trace_lines():
    stream = io.StringIO()
    ga.run_ga(lambda x: -x[0], [[0, 1]], ga.GaConfig(population_size=4, generations=3), trace=stream, trace_tag={"row": 7})
    lines = [json.loads(s) for s in stream.getvalue().splitlines()]
    assert [r["generation"] for r in lines] == [0, 1, 2, 3]
    assert all(r["row"] == 7 and r["best_fitness"] >= r["mean_fitness"] for r in lines)
