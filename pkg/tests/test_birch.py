import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rwbirch.birch import (BirchConfig, BirchError, ClusterModel, DegenerateClustering, EmptyInput, NoEntries,
                           assign_points, build_tree, filter_outliers, fit_predict, global_cluster)
from rwbirch.cf_tree import cf_from_point, cf_from_points
from rwbirch.dataset import CATALOG, FeatureMatrix, SyntheticSpec, generate_synthetic
from rwbirch.metrics import score


def fm(x, labels=None):
    x = np.asarray(x, float)
    if x.ndim == 1:
        x = x[:, None]
    return FeatureMatrix("t", CATALOG[:x.shape[1]], x, labels=labels)


def blobs(k=4, per=50, d=2, spacing=10.0, std=0.1, seed=0):
    rng = np.random.default_rng(seed)
    centers = np.arange(k)[:, None] * spacing * np.ones(d)
    x = np.concatenate([c + std * rng.normal(size=(per, d)) for c in centers])
    return fm(x, np.repeat(np.arange(k), per))


def target(k, **kw):
    return BirchConfig(target_cluster_count=k, **kw)


def naive_agglomerate(points_per_entry, k=None, limit=None):
    """O(m^3) centroid linkage over explicit point sets, lexicographic ties."""
    groups = [list(p) for p in points_per_entry]
    merged = []
    while len(groups) > 1 and (k is None or len(groups) > k):
        cents = [np.mean(g, axis=0) for g in groups]
        best = None
        for i, j in itertools.combinations(range(len(groups)), 2):
            d = float(np.linalg.norm(cents[i] - cents[j]))
            if best is None or d < best[0]:
                best = (d, i, j)
        d, i, j = best
        if limit is not None and d > limit:
            break
        merged.append(d)
        groups[i] += groups.pop(j)
    return groups, merged


class TestConfig:
    def test_exactly_one_rule(self):
        with pytest.raises(BirchError):
            BirchConfig()
        with pytest.raises(BirchError):
            BirchConfig(global_merge_distance=1.0, target_cluster_count=2)
        with pytest.raises(BirchError):
            BirchConfig(global_merge_distance=-1.0)
        with pytest.raises(ValueError):
            target(2, threshold=0.0)

    def test_tree_params(self):
        p = target(2, threshold=0.3, branching=4, leaf_capacity=5).tree_params(7)
        assert (p.threshold, p.branching, p.leaf_capacity, p.dimension) == (0.3, 4, 5, 7)


class TestBuildTree:
    def test_one_row(self):
        tree = build_tree(fm([[1.0, 2.0]]), target(1))
        assert tree.height() == 1 and tree.root_cf().n == 1

    def test_empty(self):
        with pytest.raises(EmptyInput):
            build_tree(FeatureMatrix("t", ("quiz",), np.zeros((0, 1))), target(1))

    def test_row_count_and_invariants(self):
        m = fm(np.random.default_rng(1).uniform(size=(500, 3)))
        tree = build_tree(m, target(3, threshold=0.1, branching=3, leaf_capacity=4), check=True)
        tree.check_invariants()
        assert sum(cf.n for cf in tree.leaf_entries()) == 500

    def test_no_blob_mixing(self):
        m = blobs(k=5, per=80, std=0.1)
        tree = build_tree(m, target(5, threshold=0.5), track_points=True)
        for pts in tree.leaf_entry_points():
            assert len({int(m.labels[i]) for i in pts}) == 1


class TestFilter:
    def test_min_points_one(self):
        tree = build_tree(blobs(per=10), target(4))
        kept, out = filter_outliers(tree, target(4))
        assert out == [] and kept == tree.leaf_entries()

    def test_partition_order(self):
        tree = build_tree(fm(np.random.default_rng(2).uniform(size=(200, 2))), target(2, threshold=0.05))
        cfg = target(2, outlier_min_points=3)
        kept, out = filter_outliers(tree, cfg)
        entries = tree.leaf_entries()
        assert kept == [e for e in entries if e.n >= 3]
        assert out == [e for e in entries if e.n < 3]

    def test_all_singletons_degenerate(self):
        m = fm([[0.0], [10.0], [20.0]])
        with pytest.raises(DegenerateClustering):
            fit_predict(m, target(1, threshold=0.1, outlier_min_points=2))

    @pytest.mark.parametrize("seed", range(5))
    def test_outlier_audit(self, seed):
        spec = SyntheticSpec(informative_features=2, points_per_cluster=200, outlier_fraction=0.05, seed=seed)
        m = generate_synthetic(spec)
        _, a = fit_predict(m, target(4, threshold=0.5, outlier_min_points=3))
        injected = set(np.flatnonzero(m.labels == -1).tolist())
        assert len(injected & set(a.outlier_rows)) >= len(injected) / 2
        assert -1 not in a.labels


class TestGlobalCluster:
    def test_one_entry(self):
        model = global_cluster([cf_from_point([1.0, 2.0])], target(3))
        assert model.n_clusters == 1 and model.centroids.tolist() == [[1.0, 2.0]]

    def test_empty(self):
        with pytest.raises(NoEntries):
            global_cluster([], target(1))

    def test_two_far_entries_stay(self):
        model = global_cluster([cf_from_point([0.0]), cf_from_point([100.0])], BirchConfig(global_merge_distance=1.0))
        assert model.n_clusters == 2 and model.merge_distances == []

    def test_merge_distance_example(self):
        entries = [cf_from_point([v]) for v in (0.0, 0.1, 5.0, 5.1)]
        model = global_cluster(entries, BirchConfig(global_merge_distance=0.5))
        assert model.n_clusters == 2
        assert np.allclose(model.centroids[:, 0], [0.05, 5.05], atol=1e-12)

    def test_tie_lexicographic(self):
        entries = [cf_from_point([v]) for v in (0.0, 1.0, 2.0)]
        model = global_cluster(entries, target(2))
        assert [cf.n for cf in model.cluster_cfs] == [2, 1]
        assert model.centroids[:, 0].tolist() == [0.5, 2.0]

    def test_centroid_linkage_is_not_monotone(self):
        # Merging A and B moves their centroid closer to C than |AB|.
        entries = [cf_from_point(p) for p in ([0.0, 0.0], [1.0, 0.0], [0.5, 0.9])]
        model = global_cluster(entries, target(1))
        assert model.merge_distances[0] == 1.0
        assert model.merge_distances[1] == pytest.approx(0.9)
        assert model.merge_distances[1] < model.merge_distances[0]

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2 ** 32 - 1), st.integers(1, 12), st.integers(1, 5))
    def test_matches_naive_oracle(self, seed, m, k):
        rng = np.random.default_rng(seed)
        point_sets = [rng.normal(size=(int(rng.integers(1, 4)), 3)) for _ in range(m)]
        model = global_cluster([cf_from_points(p) for p in point_sets], target(k))
        groups, merged = naive_agglomerate(point_sets, k=k)
        assert model.n_clusters == len(groups)
        for cf, g in zip(model.cluster_cfs, groups):
            want = cf_from_points(np.array(g))
            assert cf.n == want.n
            assert np.allclose(cf.ls, want.ls, rtol=1e-9, atol=1e-12)
        assert np.allclose(model.merge_distances, merged, rtol=1e-9)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2 ** 32 - 1), st.floats(0.1, 3.0))
    def test_merge_distance_oracle_and_conservation(self, seed, limit):
        rng = np.random.default_rng(seed)
        point_sets = [rng.uniform(0, 5, size=(int(rng.integers(1, 3)), 2)) for _ in range(10)]
        entries = [cf_from_points(p) for p in point_sets]
        model = global_cluster(entries, BirchConfig(global_merge_distance=limit))
        groups, merged = naive_agglomerate(point_sets, limit=limit)
        assert model.n_clusters == len(groups)
        assert all(d <= limit for d in model.merge_distances)
        assert sum(cf.n for cf in model.cluster_cfs) == sum(e.n for e in entries)
        assert np.allclose(sum(cf.ls for cf in model.cluster_cfs), sum(e.ls for e in entries))


class TestAssign:
    def model(self, centroids):
        c = np.asarray(centroids, float)
        return ClusterModel(c, [cf_from_point(v) for v in c], [], target(len(c)))

    def test_tie_goes_low(self):
        a = assign_points(fm([[1.0]]), self.model([[0.0], [2.0]]))
        assert a.labels.tolist() == [0]

    def test_brute_force(self):
        rng = np.random.default_rng(3)
        x, c = rng.normal(size=(100, 3)), rng.normal(size=(5, 3))
        a = assign_points(fm(x), self.model(c))
        for i, row in enumerate(x):
            dists = [sum((row[j] - cen[j]) ** 2 for j in range(3)) for cen in c]
            assert a.labels[i] == dists.index(min(dists))


class TestFitPredict:
    def test_single_blob(self):
        _, a = fit_predict(blobs(k=1, per=100, std=0.3), target(1))
        assert set(a.labels.tolist()) == {0}

    def test_four_blobs_perfect(self):
        m = blobs(k=4, per=100, d=3, std=0.2, seed=4)
        model, a = fit_predict(m, target(4))
        assert model.n_clusters == 4
        assert score(m.labels, a.labels).f_score == 1.0

    def test_deterministic(self):
        m = fm(np.random.default_rng(6).uniform(size=(300, 4)))
        cfg = target(3, threshold=0.2)
        m1, a1 = fit_predict(m, cfg)
        m2, a2 = fit_predict(m, cfg)
        assert np.array_equal(a1.labels, a2.labels) and m1.report() == m2.report()

    def test_report_format(self):
        model, _ = fit_predict(fm([[0.0, 0.0], [0.0, 2.0]]), target(1, threshold=5.0))
        assert model.report() == "cluster,n,radius,centroid\n0,2,1,0 1\n"
