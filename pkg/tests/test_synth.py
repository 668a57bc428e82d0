import math

import numpy as np
import pytest

from dagsbm.graph import check_topological
from dagsbm.likelihood import PriorConfig, log_prior_k
from dagsbm.state import AllocationState, OrderingState, block_counts
from dagsbm.synth import (
    Truth,
    draw_prior,
    draw_truncated_negbin,
    generate_dag,
    generate_planted,
    planted_labels,
    write_fixture,
)
from dagsbm.graph import read_edge_list


def test_zero_rates_give_empty_graph(rng):
    g, _ = generate_dag(6, rng.permutation(6), np.zeros(6, int), [[0.0]], rng=rng)
    assert g.n == 6 and g.n_edges == 0


def test_edges_point_forward(rng):
    for _ in range(20):
        sigma = rng.permutation(12)
        g, t = generate_dag(12, sigma, rng.integers(0, 3, 12), rng.gamma(1, 1, (3, 3)), rng.gamma(2, 0.5, 12), rng)
        assert check_topological(g, OrderingState.from_sigma(sigma))
        assert np.array_equal(t.sigma, sigma)


def test_edge_probability(rng):
    lam = 0.7
    hits = np.array([generate_dag(2, [0, 1], [0, 0], [[lam]], rng=rng)[0].n_edges for _ in range(100_000)], float)
    p = 1 - math.exp(-lam)
    assert abs(hits.mean() - p) < 3 * math.sqrt(p * (1 - p) / len(hits))


def test_expected_total_count(rng):
    n = 8
    sigma = rng.permutation(n)
    z = rng.integers(0, 2, n)
    z[:2] = [0, 1]
    C = rng.gamma(2, 0.5, (2, 2))
    xi = rng.gamma(3, 1 / 3, n)
    M = block_counts(generate_dag(n, sigma, z, C, xi, rng)[0], OrderingState.from_sigma(sigma),
                     AllocationState(z, np.bincount(z)), xi).m
    want = float((M * C).sum())
    totals = np.array([generate_dag(n, sigma, z, C, xi, rng, binarize=False)[0].total_count for _ in range(20_000)])
    # the total is Poisson, so its variance equals its mean
    assert abs(totals.mean() - want) < 3 * math.sqrt(want / len(totals))


def test_bad_inputs(rng):
    with pytest.raises(ValueError):
        generate_dag(3, [0, 1], [0, 0, 0], [[1.0]])
    with pytest.raises(ValueError):
        generate_dag(2, [0, 0], [0, 0], [[1.0]])
    with pytest.raises(ValueError):
        generate_dag(2, [0, 1], [0, 1], [[1.0]])
    with pytest.raises(ValueError):
        generate_dag(2, [0, 1], [0, 0], [[-1.0]])


class TestPlanted:
    def test_labels(self):
        assert planted_labels(7, 3).tolist() == [0, 0, 0, 1, 1, 2, 2]
        assert np.bincount(planted_labels(150, 3)).tolist() == [50, 50, 50]

    def test_no_between_edges(self):
        g, t = generate_planted(30, 3, 0.9, 0.0, seed=1)
        assert g.n_edges > 0
        assert all(t.z[p] == t.z[q] for p, q in g.edges)

    def test_single_group(self):
        g, t = generate_planted(20, 1, 0.3, 0.0, seed=2)
        assert np.all(t.z == 0) and np.all(g.edges[:, 0] < g.edges[:, 1])

    def test_errors(self):
        with pytest.raises(ValueError):
            generate_planted(3, 4, 0.5, 0.1, seed=0)
        with pytest.raises(ValueError):
            generate_planted(10, 2, 0.1, 0.1, seed=0)

    def test_seeded(self):
        a, _ = generate_planted(40, 2, 0.5, 0.05, seed=7)
        b, _ = generate_planted(40, 2, 0.5, 0.05, seed=7)
        assert np.array_equal(a.edges, b.edges)

    def test_cross_group_fraction(self):
        # 3 groups of 50: 3675 within-group and 7500 between-group forward dyads
        pw, pb = 1 - math.exp(-0.8), 1 - math.exp(-0.02)
        rng = np.random.default_rng(3)
        within, between = [], []
        for _ in range(300):
            g, t = generate_planted(150, 3, 0.8, 0.02, seed=rng)
            cross = int(np.sum(t.z[g.edges[:, 0]] != t.z[g.edges[:, 1]]))
            between.append(cross)
            within.append(g.n_edges - cross)
        within, between = np.array(within, float), np.array(between, float)
        assert abs(within.mean() - 3675 * pw) < 3 * math.sqrt(3675 * pw * (1 - pw) / 300)
        assert abs(between.mean() - 7500 * pb) < 3 * math.sqrt(7500 * pb * (1 - pb) / 300)
        frac = between / (within + between)
        want = 7500 * pb / (7500 * pb + 3675 * pw)
        assert abs(frac.mean() - want) < 3 * frac.std() / math.sqrt(300) + 1e-4


def test_truth_round_trip(tmp_path):
    g, t = generate_planted(12, 2, 0.6, 0.1, seed=4)
    write_fixture(g, t, tmp_path / "e.txt", tmp_path / "t.json")
    back = Truth.load(tmp_path / "t.json")
    for name in ("sigma", "z", "C", "xi"):
        assert np.array_equal(getattr(back, name), getattr(t, name))
    h = read_edge_list(tmp_path / "e.txt")
    assert h.n_edges == g.n_edges


def test_truncated_negbin_matches_prior_mass(rng):
    draws = np.array([draw_truncated_negbin(2.0, 0.4, rng) for _ in range(50_000)])
    for k in range(1, 6):
        p = math.exp(log_prior_k(k, 2.0, 0.4))
        assert abs(np.mean(draws == k) - p) < 3 * math.sqrt(p * (1 - p) / len(draws))


def test_prior_draw_shapes(rng):
    pri = PriorConfig()
    for regime in (0, 1):
        d = draw_prior(9, pri, regime, rng)
        assert sorted(d.sigma.tolist()) == list(range(9))
        assert d.C.shape == (d.z.max() + 1,) * 2 and np.all(d.xi > 0)
        if regime:
            assert d.k >= 1 and d.gamma > 0 and d.z.max() < d.k
        else:
            assert 0 <= d.alpha < 1 and d.theta + d.alpha > 0
