import math

import numpy as np
import pytest

from tsne_forensics.affinity import (
    AffinityConfig,
    affinities,
    bandwidth_search,
    conditional_rows,
    row_entropies,
    squared_distances,
    symmetrize,
    uniformity_statistic,
)
from tsne_forensics.datasets import doubled_frame, equidistant_simplex, sample_sphere
from tsne_forensics.divergences import PairDistribution

LINE = np.array([[0.0], [1.0], [3.0]])


def test_config_requires_exactly_one_mode():
    with pytest.raises(ValueError):
        AffinityConfig()
    with pytest.raises(ValueError):
        AffinityConfig(sigma=1.0, perplexity=5.0)
    assert AffinityConfig(sigma=1.0).mode == "fixed_sigma"
    assert AffinityConfig(perplexity=5.0).mode == "perplexity"


def test_squared_distances_exact_diagonal():
    d2 = squared_distances(np.random.default_rng(0).normal(size=(7, 3)))
    assert np.all(np.diag(d2) == 0)
    np.testing.assert_allclose(d2, d2.T, atol=1e-14)


def test_two_points_single_neighbor():
    rows = conditional_rows(np.array([[0.0, 0.0], [5.0, 1.0]]), 0.3)
    assert rows[0, 1] == 1.0 and rows[1, 0] == 1.0


def test_equilateral_rows():
    rows = conditional_rows(equidistant_simplex(3), 1.0)
    np.testing.assert_allclose(rows[~np.eye(3, dtype=bool)], 0.5, atol=1e-15)


def test_line_row_example():
    rows = conditional_rows(LINE, 1.0)
    expected = 1.0 / (1.0 + math.exp(-4.0))
    assert rows[0, 1] == pytest.approx(expected, abs=1e-15)
    assert rows[0, 2] == pytest.approx(1.0 - expected, abs=1e-15)
    assert (round(rows[0, 1], 6), round(rows[0, 2], 6)) == (0.982014, 0.017986)


def test_perplexity_at_least_n_minus_one_is_uniform():
    x = np.random.default_rng(3).normal(size=(10, 4))
    res = bandwidth_search(x, AffinityConfig(perplexity=9.0))
    assert np.all(np.isinf(res.sigmas))
    rows = conditional_rows(x, res.sigmas)
    np.testing.assert_array_equal(rows[~np.eye(10, dtype=bool)], 1.0 / 9.0)


def test_equidistant_perplexity_two():
    res = bandwidth_search(equidistant_simplex(3), AffinityConfig(perplexity=2.0))
    np.testing.assert_allclose(res.achieved_perplexities, 2.0, rtol=1e-12)


def test_line_search_matches_dense_scan():
    target = math.log(1.5)
    res = bandwidth_search(LINE, AffinityConfig(perplexity=1.5, entropy_tolerance=1e-9))
    # independent oracle: scalar scan over a log grid, then refine by secant on the bracket
    grid = np.logspace(-3, 3, 200001)
    w1 = np.exp(-1.0 / (2 * grid**2))
    w3 = np.exp(-9.0 / (2 * grid**2))
    with np.errstate(divide="ignore", invalid="ignore"):
        p1 = w1 / (w1 + w3)
        h = -(p1 * np.log(p1) + (1 - p1) * np.log(1 - p1))
    h = np.nan_to_num(h)
    k = int(np.argmin(np.abs(h - target)))
    assert res.sigmas[0] == pytest.approx(grid[k], rel=1e-3)
    p = conditional_rows(LINE, res.sigmas)[0, 1:]
    assert -np.sum(p * np.log(p)) == pytest.approx(target, abs=1e-9)
    assert res.converged.all()


def test_symmetrize_against_scalar_composition():
    rows = conditional_rows(LINE, 1.0)
    p = symmetrize(rows)

    def cond(j, i):
        num = math.exp(-((LINE[i, 0] - LINE[j, 0]) ** 2) / 2)
        den = sum(math.exp(-((LINE[i, 0] - LINE[k, 0]) ** 2) / 2) for k in range(3) if k != i)
        return num / den

    expected = [(cond(j, i) + cond(i, j)) / 3 for i, j in [(0, 1), (0, 2), (1, 2)]]
    np.testing.assert_allclose(p.mass, expected, rtol=1e-14)


def test_symmetrize_small_cases():
    assert symmetrize(np.array([[0.0, 1.0], [1.0, 0.0]])).mass.tolist() == [1.0]
    np.testing.assert_allclose(symmetrize(conditional_rows(equidistant_simplex(3), 2.0)).mass, 1 / 3, atol=1e-15)
    np.testing.assert_allclose(symmetrize(conditional_rows(equidistant_simplex(4), 2.0)).mass, 1 / 6, atol=1e-15)
    with pytest.raises(ValueError):
        symmetrize(np.ones((2, 3)))


def test_rows_are_distributions():
    x = sample_sphere(50, 5, seed=1).points
    rows = conditional_rows(x, np.linspace(0.1, 2.0, 50))
    np.testing.assert_allclose(rows.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(np.diag(rows) == 0)
    ent = row_entropies(rows)
    assert np.all((ent >= 0) & (ent <= math.log(49) + 1e-12))


def test_uniformity_statistic_examples():
    assert uniformity_statistic(PairDistribution.uniform(7)) == 0.0
    p, _, _ = affinities(doubled_frame(200), AffinityConfig(sigma=1.0))
    limit = 2.0 / (1.0 + math.exp(-1.5)) - 1.0
    assert abs(uniformity_statistic(p) - limit) <= 0.02


@pytest.mark.parametrize("seed", range(5))
def test_sphere_near_uniform(seed):
    p, _, _ = affinities(sample_sphere(500, 10000, seed), AffinityConfig(sigma=1.0))
    assert uniformity_statistic(p) <= 0.2


@pytest.mark.parametrize("config", [AffinityConfig(sigma=0.7), AffinityConfig(perplexity=4.0)])
def test_equidistant_uniform_any_mode(config):
    p, _, _ = affinities(equidistant_simplex(8), config)
    assert uniformity_statistic(p) == 0.0
