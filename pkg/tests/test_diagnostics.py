import itertools
import json
import math

import numpy as np
import pytest
from scipy.special import betainc
from scipy.stats import poisson

from tsne_forensics.affinity import AffinityConfig, affinities
from tsne_forensics.datasets import doubled_frame, sample_sphere
from tsne_forensics.diagnostics import (
    BlockPartition,
    DiagnosticsReport,
    Theorem,
    block_stats,
    cap_measure_bound,
    cap_measure_monte_carlo,
    covering_ball,
    doubled_frame_constants,
    enclosing_ball,
    enclosing_ball_brute,
    grid_collision_stats,
    theorem_ball_check,
)
from tsne_forensics.divergences import PairDistribution, kl_divergence
from tsne_forensics.optimizer import low_dim_affinities

SQUARE = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]])
TRI = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, math.sqrt(3) / 2]])


def test_covering_ball_examples():
    assert covering_ball(np.ones((5, 2)), 0.3).radius == 0.0
    assert covering_ball(SQUARE, 0.75).radius == pytest.approx(math.sqrt(2), abs=1e-15)
    assert covering_ball(TRI, 1.0).radius == pytest.approx(1.0, abs=1e-15)


def test_covering_ball_monotone_in_fraction():
    y = np.random.default_rng(0).normal(size=(60, 2))
    radii = [covering_ball(y, f).radius for f in np.linspace(0.05, 1.0, 20)]
    assert all(a <= b for a, b in zip(radii, radii[1:]))


def test_theorem_ball_examples():
    res = theorem_ball_check(np.zeros((4, 2)), 0.1)
    assert res["fraction_in_r_ball"] == 1.0 and res["passes"]
    res = theorem_ball_check(np.array([[0.0, 0.0], [10.0, 0.0]]), 0.4)
    assert res["fraction_in_r_ball"] == 0.5 and not res["passes"]
    assert res["enclosing_radius"] == pytest.approx(5.0)
    assert res["radius_over_sqrt_r"] == pytest.approx(5.0 / math.sqrt(0.4))


def test_theorem_ball_monotone_in_r():
    y = np.random.default_rng(1).normal(size=(50, 2))
    fr = [theorem_ball_check(y, r)["fraction_in_r_ball"] for r in (0.1, 0.3, 0.6, 1.0, 1.9)]
    assert all(a <= b for a, b in zip(fr, fr[1:]))


def test_enclosing_ball_examples():
    b = enclosing_ball(np.array([[0.0, 0.0], [2.0, 0.0]]))
    np.testing.assert_allclose(b.center, [1.0, 0.0], atol=1e-15)
    assert b.radius == pytest.approx(1.0)
    assert enclosing_ball(TRI).radius == pytest.approx(1 / math.sqrt(3), abs=1e-12)
    assert enclosing_ball(np.array([[3.0, 4.0]])).radius == 0.0


@pytest.mark.parametrize("seed", range(10))
def test_enclosing_ball_vs_brute(seed):
    y = np.random.default_rng(seed).normal(size=(30, 2))
    b, o = enclosing_ball(y, seed=seed), enclosing_ball_brute(y)
    assert abs(b.radius - o.radius) <= 1e-9
    assert np.all(np.linalg.norm(y - b.center, axis=1) <= b.radius + 1e-9)


def test_enclosing_ball_3d():
    y = np.random.default_rng(11).normal(size=(25, 3))
    assert enclosing_ball(y).radius == pytest.approx(enclosing_ball_brute(y).radius, abs=1e-9)


def test_enclosing_vs_covering_two_approximation():
    y = np.random.default_rng(2).normal(size=(40, 2))
    r_enc, r_cov = enclosing_ball(y).radius, covering_ball(y, 1.0).radius
    assert r_cov / 2 - 1e-12 <= r_enc <= r_cov + 1e-12


def test_grid_trivial_cases():
    one = grid_collision_stats(np.zeros((1, 3)), np.zeros((1, 2)), g=1.0)
    assert one["fraction_alone"] == 1.0 and one["fraction_far_but_close"] == 0.0
    same = grid_collision_stats(np.eye(5), np.zeros((5, 2)), g=1.0)
    assert same["fraction_alone"] == 0.0 and same["B"] == 0.0
    assert same["fraction_far_but_close"] == 1.0


@pytest.mark.parametrize("seed", range(5))
def test_grid_pigeonhole_and_cell_geometry(seed):
    rng = np.random.default_rng(seed)
    x = sample_sphere(200, 5, seed).points
    y = rng.normal(size=(200, 2))
    res = grid_collision_stats(x, y, g=2.0)
    assert res["fraction_alone"] <= res["n_cells"] / 200
    assert res["cells_per_axis"] == math.ceil(math.sqrt(200) / 2.0)
    assert math.sqrt(2) * res["cell_side"] <= res["close_radius"] + 1e-12


def test_grid_row_mismatch():
    with pytest.raises(ValueError):
        grid_collision_stats(np.zeros((3, 2)), np.zeros((4, 2)), g=1.0)


def test_doubled_frame_constants():
    p0, p1 = doubled_frame_constants(1.0)
    assert p0 == pytest.approx(1.635149, abs=1e-6)
    assert p1 == pytest.approx(0.364851, abs=1e-6)


def _block_oracle(m, sigma):
    """Block masses of P for the doubled frame from the closed-form row weights."""
    e = lambda d2: math.exp(-d2 / (2 * sigma * sigma))
    row_a = (m - 1) * e(2) + m * e(5)
    row_b = m * e(5) + (m - 1) * e(8)
    n = 2 * m
    pair_aa = 2 * e(2) / row_a / n
    pair_bb = 2 * e(8) / row_b / n
    pair_ab = (e(5) / row_a + e(5) / row_b) / n
    return {"AA": m * (m - 1) / 2 * pair_aa, "AB": m * m * pair_ab, "BB": m * (m - 1) / 2 * pair_bb}


@pytest.mark.parametrize("m", [2, 7])
def test_block_masses_match_formula(m):
    cloud = doubled_frame(m)
    p, _, _ = affinities(cloud, AffinityConfig(sigma=1.0))
    y = np.random.default_rng(m).normal(size=(2 * m, 2))
    q, _ = low_dim_affinities(y)
    res = block_stats(p, q, BlockPartition.from_labels(cloud.labels), 1.0)
    oracle = _block_oracle(m, 1.0)
    for k in oracle:
        assert res["P_blocks"][k] == pytest.approx(oracle[k], rel=1e-12)
    assert sum(res["P_blocks"].values()) == pytest.approx(1.0, abs=1e-12)
    assert res["pinsker_lower_bound"] <= res["block_kl"] <= res["full_kl"]
    assert res["full_kl"] == kl_divergence(p, q)


def test_block_limit_constants():
    # for large m, (C(n,2) / |block|) P_block approaches p0*, p1*
    m = 400
    o = _block_oracle(m, 1.0)
    n_pairs = m * (2 * m - 1)
    p0, p1 = doubled_frame_constants(1.0)
    within = o["AA"] + o["BB"]
    assert within * n_pairs / (m * (m - 1)) == pytest.approx((p0 + p1) / 2, abs=0.01)
    assert o["AA"] * n_pairs / (m * (m - 1) / 2) == pytest.approx(p0, abs=0.01)


def test_partition_must_cover():
    with pytest.raises(ValueError):
        block_stats(PairDistribution.uniform(4), PairDistribution.uniform(4), BlockPartition((0, 1), (2,)), 1.0)
    with pytest.raises(ValueError):
        BlockPartition((0, 1), (1, 2, 3)).validate(4)


def test_cap_bound_values():
    assert cap_measure_bound(0.2, 10) == pytest.approx(6.8e-8, rel=0.01)
    assert cap_measure_bound(0.2, 10) == pytest.approx(
        (1 / math.sqrt(20 * math.pi)) * (0.2 / math.sqrt(0.99)) ** 9, rel=1e-12)
    rs = [1e-3, 0.05, 0.2, 0.7, 1.5]
    vals = [cap_measure_bound(r, 10) for r in rs]
    assert all(a < b for a, b in zip(vals, vals[1:]))
    assert cap_measure_bound(1e-9, 10) < 1e-75
    with pytest.raises(ValueError):
        cap_measure_bound(2.0, 10)
    with pytest.raises(ValueError):
        cap_measure_bound(0.5, 1)


def _exact_cap(r, d):
    c = 1 - r * r / 2
    return 0.5 * betainc((d - 1) / 2, 0.5, 1 - c * c)


@pytest.mark.parametrize("r,d", [(0.2, 10), (0.2, 30), (0.5, 5), (1.0, 3), (0.8, 50)])
def test_cap_bound_exceeds_exact_measure(r, d):
    assert _exact_cap(r, d) <= cap_measure_bound(r, d)


def test_cap_monte_carlo():
    # At r=0.2, d=10 the exact measure (6.43e-8) sits 5% under the bound (6.76e-8),
    # below the 1e-7 resolution of 10^7 samples. The hit count is therefore held
    # to a one-sided Poisson limit at the bound's mean instead of a raw comparison.
    n = 10_000_000
    hits = round(cap_measure_monte_carlo(0.2, 10, n, seed=0) * n)
    assert hits <= poisson.ppf(0.999, cap_measure_bound(0.2, 10) * n)
    est = cap_measure_monte_carlo(1.0, 3, 400_000, seed=1)
    assert est == pytest.approx(_exact_cap(1.0, 3), abs=4e-3)
    assert cap_measure_monte_carlo(0.2, 30, 1_000_000, seed=2) <= cap_measure_bound(0.2, 30)


def test_report_roundtrip_and_tags():
    rep = DiagnosticsReport()
    rep.add("x", np.float64(1.5), Theorem.THM_SPHERE, r=0.1)
    rep.add("v", np.array([1.0, 2.0]), Theorem.PROP_VOLUME)
    doc = json.loads(json.dumps(rep.to_dict()))
    assert doc["schema_version"] == 1
    back = DiagnosticsReport.from_dict(doc)
    assert back.get("x") == 1.5 and back.get("v") == [1.0, 2.0]
    assert {t.value for t in Theorem} == {"prop_volume", "prop_doubled_frame", "prop_single_point",
                                          "thm_sphere", "lemma_small_kl", "lemma_concentration"}
