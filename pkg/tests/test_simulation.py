import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import kstest, ks_2samp

from gwcrp.graph import SpatialGraph, lattice_graph
from gwcrp.simulation import (
    DEFAULT_CLUSTER_PARAMS,
    SimulationDesign,
    ab_amse,
    ab_amse_report,
    cumulative_baseline,
    generate_dataset,
    inverse_piecewise_survival,
    lattice_design,
    rand_index,
    replicate_rng,
)
from gwcrp.survival import HazardPartition

PART = HazardPartition((1.5, 6.0))


def brute_rand(a, b):
    pairs = list(itertools.combinations(range(len(a)), 2))
    agree = sum((a[i] == a[j]) == (b[i] == b[j]) for i, j in pairs)
    return agree / len(pairs)


def one_region_design(beta, lam, cuts=(1.5, 6.0), m=60, **kw):
    g = SpatialGraph.from_edges([("only",)])
    return SimulationDesign(g, [0], ({"beta": beta, "lambda": lam},), subjects_per_region=m,
                            partition=HazardPartition(cuts), **kw)


class TestInverseSurvival:
    def test_exponential(self, rng):
        u = rng.random(100)
        t = inverse_piecewise_survival(u, [0.3], 0.4, HazardPartition(()))
        assert np.allclose(t, -np.log(u) / (0.3 * math.exp(0.4)), rtol=1e-14)

    def test_u_near_one(self):
        t = inverse_piecewise_survival(1 - 1e-12, [0.045, 0.036, 0.045], 0.0, PART)
        assert 0 < t < 1e-9

    def test_round_trip(self, rng):
        for _ in range(200):
            J = int(rng.integers(1, 5))
            part = HazardPartition(tuple(np.cumsum(rng.uniform(0.2, 3, J - 1))))
            lam = rng.uniform(0.01, 2, J)
            lp = rng.normal()
            u = rng.uniform(1e-6, 1 - 1e-6)
            t = inverse_piecewise_survival(u, lam, lp, part)
            S = math.exp(-cumulative_baseline(t, lam, part)[0] * math.exp(lp))
            assert S == pytest.approx(u, abs=1e-10)

    def test_invalid_u(self):
        with pytest.raises(ValueError):
            inverse_piecewise_survival(0.0, [1.0], 0.0, HazardPartition(()))

    def test_hazard_count(self):
        with pytest.raises(ValueError):
            inverse_piecewise_survival(0.5, [1.0], 0.0, PART)

    def test_ks_against_target(self):
        rng = np.random.default_rng(8)
        lam = np.array([0.045, 0.036, 0.045])
        lp = 0.7
        t = inverse_piecewise_survival(rng.random(10_000), lam, lp, PART)
        cdf = lambda x: 1 - np.exp(-cumulative_baseline(x, lam, PART) * math.exp(lp))
        assert kstest(t, cdf).pvalue > 0.01


class TestGenerate:
    def test_exponential_times(self):
        d = one_region_design([0.0], [0.2], cuts=(), m=10_000, censor_cap=1e9, censor_rate=1e-12)
        data = generate_dataset(d, 3)
        assert data.event.mean() > 0.999
        assert kstest(data.latent_time, "expon", args=(0, 1 / 0.2)).pvalue > 0.01

    def test_high_hazard_removes_censoring(self):
        lam = tuple(1000 * np.array([0.045, 0.036, 0.045]))
        data = generate_dataset(one_region_design([1, 0.5, 1], lam, m=2000), 1)
        assert data.event.mean() > 0.995

    def test_censoring_around_thirty_percent(self):
        d = lattice_design("design1")
        rates = [generate_dataset(d, replicate_rng(0, r)).censoring_rate() for r in range(10)]
        assert 0.25 <= np.mean(rates) <= 0.35

    def test_censoring_rule(self):
        data = generate_dataset(lattice_design("design1"), 5)
        assert np.all(data.time <= 150)
        assert np.array_equal(data.event, data.latent_time <= data.time)
        assert np.all(data.time <= data.latent_time)

    def test_deterministic(self):
        d = lattice_design("design2")
        a, b = generate_dataset(d, replicate_rng(4, 2)), generate_dataset(d, replicate_rng(4, 2))
        assert np.array_equal(a.time, b.time) and np.array_equal(a.X, b.X)
        c = generate_dataset(d, replicate_rng(4, 3))
        assert not np.array_equal(a.time, c.time)

    def test_shapes(self):
        d = lattice_design("design1")
        data = generate_dataset(d, 0)
        assert data.X.shape == (64 * 60, 3)
        assert np.bincount(data.region).tolist() == [60] * 64
        assert data.region_ids == d.graph.region_ids

    def test_clusters_distinguishable(self):
        rng = np.random.default_rng(2)
        lat = []
        for c in (0, 2):
            d = one_region_design(DEFAULT_CLUSTER_PARAMS[c]["beta"], DEFAULT_CLUSTER_PARAMS[c]["lambda"], m=3000)
            lat.append(generate_dataset(d, rng).latent_time)
        assert ks_2samp(*lat).pvalue < 0.01

    def test_survival_uniform(self):
        rng = np.random.default_rng(6)
        c = DEFAULT_CLUSTER_PARAMS[1]
        d = one_region_design(c["beta"], c["lambda"], m=10_000)
        data = generate_dataset(d, rng)
        lp = data.X @ np.asarray(c["beta"])
        S = np.exp(-cumulative_baseline(data.latent_time, c["lambda"], PART) * np.exp(lp))
        assert kstest(S, "uniform").pvalue > 0.01


class TestDesigns:
    @pytest.mark.parametrize("name,k", [("design1", 3), ("design2", 2), ("design3", 3), ("design4", 2)])
    def test_cluster_counts(self, name, k):
        d = lattice_design(name)
        assert d.k == k and sorted(np.unique(d.true_labels)) == list(range(k))
        assert d.graph.n == 64

    @pytest.mark.parametrize("name", ["design2", "design3", "design4"])
    def test_has_disjoint_cluster(self, name):
        d = lattice_design(name)
        A = d.graph.adjacency
        split = False
        for c in range(d.k):
            idx = np.flatnonzero(d.true_labels == c)
            sub = SpatialGraph(tuple(range(idx.size)), A[np.ix_(idx, idx)])
            split |= bool(np.isinf(sub.distances).any())
        assert split

    def test_design1_contiguous(self):
        d = lattice_design("design1")
        for c in range(3):
            idx = np.flatnonzero(d.true_labels == c)
            sub = SpatialGraph(tuple(range(idx.size)), d.graph.adjacency[np.ix_(idx, idx)])
            assert np.isfinite(sub.distances).all()

    def test_json_round_trip(self):
        d = lattice_design("design3")
        back = SimulationDesign.from_json(d.to_json())
        assert back.graph.region_ids == d.graph.region_ids
        assert np.array_equal(back.graph.adjacency, d.graph.adjacency)
        assert np.array_equal(back.true_labels, d.true_labels)
        assert back.cluster_params == d.cluster_params
        assert d.to_json()["true_labels"][0] == 1

    def test_invalid(self):
        g = lattice_graph(1, 2)
        with pytest.raises(ValueError):
            SimulationDesign(g, [0, 1], ({"beta": [0], "lambda": [1, 1, 1]},))
        with pytest.raises(ValueError):
            SimulationDesign(g, [0, 0], ({"beta": [0], "lambda": [1, 1]},))
        with pytest.raises(ValueError):
            SimulationDesign(g, [0, 0], ({"beta": [0], "lambda": [1, -1, 1]},))


class TestRandIndex:
    def test_identical_up_to_relabeling(self):
        assert rand_index([0, 0, 1, 2], [5, 5, 3, 9]) == 1.0

    def test_example(self):
        assert rand_index([1, 1, 2, 2], [1, 2, 1, 2]) == pytest.approx(2 / 6)

    def test_two_items(self):
        assert rand_index([0, 0], [1, 1]) == 1.0
        assert rand_index([0, 1], [1, 1]) == 0.0

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            rand_index([0, 1], [0, 1, 2])

    @settings(max_examples=300, deadline=None)
    @given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 3)), min_size=2, max_size=15))
    def test_brute_force_and_symmetry(self, pairs):
        a, b = map(list, zip(*pairs))
        r = rand_index(a, b)
        assert r == pytest.approx(brute_rand(a, b), abs=1e-14)
        assert r == rand_index(b, a)
        assert rand_index([x + 7 for x in a], b) == r


class TestAbAmse:
    def test_exact(self):
        truth = np.array([[1.0, 2.0], [0.0, -1.0]])
        z = np.array([0, 1, 1])
        E = np.repeat(truth[z][None], 4, axis=0)
        ab, amse = ab_amse(E, z, truth)
        assert np.all(ab == 0) and np.all(amse == 0)

    def test_constant_offset(self):
        truth = np.array([[0.5]])
        E = np.full((5, 1, 1), 0.5 + 0.3)
        ab, amse = ab_amse(E, [0], truth)
        assert ab[0] == pytest.approx(0.3) and amse[0] == pytest.approx(0.09)

    def test_toy_table(self):
        # 2 replicates, 3 regions; cluster 0 = {0, 1}, cluster 1 = {2}
        truth = np.array([[1.0], [-1.0]])
        z = [0, 0, 1]
        E = np.array([[[1.2], [0.9], [-1.5]], [[1.1], [1.0], [-0.7]]])
        ab, amse = ab_amse(E, z, truth)
        ab0 = ((0.2 - 0.1) + (0.1 + 0.0)) / 4
        ab1 = (-0.5 + 0.3) / 2
        mse0 = (0.04 + 0.01 + 0.01 + 0.0) / 4
        mse1 = (0.25 + 0.09) / 2
        assert ab[0] == pytest.approx((ab0 + ab1) / 2)
        assert amse[0] == pytest.approx((mse0 + mse1) / 2)

    def test_amse_dominates_squared_bias(self, rng):
        E = rng.normal(0.2, 0.5, (30, 1, 3))
        ab, amse = ab_amse(E, [0], np.zeros((1, 3)))
        assert np.all(amse >= ab**2)

    def test_mismatch(self):
        with pytest.raises(ValueError):
            ab_amse(np.zeros((2, 3, 2)), [0, 1], np.zeros((2, 2)))
        with pytest.raises(ValueError):
            ab_amse(np.zeros((2, 2, 2)), [0, 2], np.zeros((2, 2)))

    def test_report_scales(self):
        d = lattice_design("design2")
        truth = d.true_thetas()[d.true_labels]
        E = np.repeat(truth[None], 3, axis=0) + 0.1
        rep = ab_amse_report(E, d)
        assert np.allclose(rep["ab_beta"], 0.1) and np.allclose(rep["amse_log_lambda"], 0.01)
        lam = np.exp(d.true_thetas()[:, 3:])
        assert np.allclose(rep["ab_lambda"], lam.mean(0) * (math.exp(0.1) - 1))
        assert rep["amse_beta_mean"] == pytest.approx(0.01)
