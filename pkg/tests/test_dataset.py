import hashlib
from collections import Counter
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from rwbirch.dataset import (CATALOG, PAPER_SHAPE, CsvSchema, DatasetError, EmptySubset, FeatureMatrix,
                             InteractionRecord, InvalidSpec, MissingColumn, ParseError, SubsetKey,
                             SyntheticSpec, generate_synthetic, generate_with_roles, load_records,
                             normalize, paper_shape_specs, partition, pivot, read_matrix, write_subset)

DATA = Path(__file__).parent / "data"
S21 = SubsetKey("SocialScience", "S2", 1)


def rec(learner, activity, clicks, subset=S21):
    return InteractionRecord(learner, subset, activity, clicks)


class TestTypes:
    def test_catalog_closed(self):
        assert len(CATALOG) == 20 and len(set(CATALOG)) == 20
        with pytest.raises(DatasetError):
            rec("u", "tiktok", 1)

    def test_subset_key(self):
        assert SubsetKey.parse("S2-1") == S21 and S21.label == "S2-1"
        assert SubsetKey.parse("T3-4").category == "STEM"
        with pytest.raises(DatasetError):
            SubsetKey("STEM", "S1", 1)
        with pytest.raises(DatasetError):
            SubsetKey("STEM", "T1", 5)

    def test_negative_clicks(self):
        with pytest.raises(DatasetError):
            rec("u", "quiz", -1)

    def test_matrix_checks(self):
        with pytest.raises(DatasetError):
            FeatureMatrix("x", ("quiz", "quiz"), np.zeros((1, 2)))
        with pytest.raises(DatasetError):
            FeatureMatrix("x", ("quiz",), np.zeros((2, 2)))
        with pytest.raises(DatasetError):
            FeatureMatrix("x", ("quiz",), np.zeros((2, 1)), labels=[0])
        m = FeatureMatrix("x", ("quiz",), np.zeros((2, 1)))
        with pytest.raises(ValueError):
            m.rows[0, 0] = 1.0


class TestLoadRecords:
    def test_single_row(self, tmp_path):
        f = tmp_path / "in.csv"
        f.write_text("learner,forumng,quiz\nu1,3,0\n")
        recs = load_records(f, CsvSchema(learner_column="learner", subset=S21))
        assert recs == [rec("u1", "forumng", 3)]

    def test_header_only(self):
        assert load_records(DATA / "T1-2.csv") == []

    def test_fixture_totals(self):
        # S2-1.csv by hand: non-zero cells 2+1+3+1 = 7; clicks 3+2+5+1+1+1+4 = 17
        recs = load_records(DATA / "S2-1.csv")
        assert len(recs) == 7
        assert sum(r.clicks for r in recs) == 17
        assert {r.subset for r in recs} == {S21}

    def test_missing_column(self, tmp_path):
        with pytest.raises(MissingColumn) as err:
            load_records(DATA / "S2-1.csv", CsvSchema(activity_columns=("wiki",)))
        assert err.value.column == "wiki"

    def test_parse_error_position(self):
        with pytest.raises(ParseError) as err:
            load_records(DATA / "S1-2.csv")
        assert (err.value.row, err.value.column) == (2, "quiz")

    def test_ragged_row(self, tmp_path):
        f = tmp_path / "S1-4.csv"
        f.write_text("learner_id,quiz\nu1,1\nu2\n")
        with pytest.raises(ParseError) as err:
            load_records(f)
        assert err.value.row == 3


class TestPartition:
    def test_single_key(self):
        recs = [rec("a", "quiz", 1), rec("b", "url", 2)]
        assert partition(recs) == {S21: recs}

    def test_empty(self):
        assert partition([]) == {}

    def test_mixed(self):
        keys = [S21, SubsetKey.parse("T1-3"), SubsetKey.parse("S4-2")]
        recs = [rec(f"u{i}", "quiz", 1, k) for k, n in zip(keys, (5, 2, 9)) for i in range(n)]
        rng = np.random.default_rng(0)
        recs = [recs[i] for i in rng.permutation(len(recs))]
        buckets = partition(recs)
        assert {k: len(v) for k, v in buckets.items()} == {keys[0]: 5, keys[1]: 2, keys[2]: 9}
        assert all(r.subset == k for k, v in buckets.items() for r in v)
        assert sum(len(v) for v in buckets.values()) == len(recs)


class TestPivot:
    def test_one_cell(self):
        m = pivot([rec("u", "quiz", 3)])
        assert m.rows.tolist() == [[3]] and m.feature_names == ("quiz",)

    def test_disjoint_support(self):
        m = pivot([rec("a", "url", 2), rec("b", "forumng", 5)])
        assert m.feature_names == ("forumng", "url")
        assert m.rows.tolist() == [[0, 2], [5, 0]]

    def test_column_sums(self):
        rng = np.random.default_rng(4)
        acts = ["wiki", "quiz", "homepage", "forumng"]
        recs = [rec(f"u{rng.integers(5)}", acts[rng.integers(4)], int(rng.integers(1, 9))) for _ in range(60)]
        expected = Counter()
        for r in recs:
            expected[r.activity] += r.clicks
        m = pivot(recs)
        assert m.n_rows == 5 and m.feature_names == ("forumng", "homepage", "wiki", "quiz")
        for j, a in enumerate(m.feature_names):
            assert m.rows[:, j].sum() == expected[a]
        assert m.rows.sum() == sum(r.clicks for r in recs)

    def test_empty(self):
        with pytest.raises(EmptySubset):
            pivot([])

    def test_mixed_subsets(self):
        with pytest.raises(DatasetError):
            pivot([rec("a", "quiz", 1), rec("a", "quiz", 1, SubsetKey.parse("S2-2"))])


class TestNormalize:
    def m(self, cols):
        return FeatureMatrix("x", CATALOG[:len(cols)], np.array(cols, float).T)

    def test_constant(self):
        assert normalize(self.m([[2, 2, 2]])).rows[:, 0].tolist() == [0, 0, 0]

    def test_linear(self):
        assert normalize(self.m([[0, 5, 10]])).rows[:, 0].tolist() == [0, 0.5, 1]

    def test_range_and_argmax(self):
        x = np.random.default_rng(5).normal(size=(20, 6)) * 7
        m = FeatureMatrix("x", CATALOG[:6], x, labels=np.arange(20))
        out = normalize(m)
        assert out.rows.min() >= 0 and out.rows.max() <= 1
        assert np.array_equal(out.rows.argmax(axis=0), x.argmax(axis=0))
        assert out.feature_names == m.feature_names and np.array_equal(out.labels, m.labels)

    @settings(max_examples=50)
    @given(arrays(float, st.tuples(st.integers(1, 15), st.integers(1, 5)), elements=st.floats(-1e6, 1e6)))
    def test_idempotent_and_monotone(self, x):
        m = FeatureMatrix("x", CATALOG[:x.shape[1]], x)
        once = normalize(m)
        assert np.array_equal(normalize(once).rows, once.rows)
        for j in range(x.shape[1]):
            order = np.argsort(x[:, j], kind="stable")
            assert np.all(np.diff(once.rows[order, j]) >= 0)


class TestGenerator:
    def test_one_cluster(self):
        spec = SyntheticSpec(cluster_count=1, informative_features=3, points_per_cluster=10, variance=0.3, seed=1)
        m = generate_synthetic(spec)
        assert set(m.labels.tolist()) == {0}
        sigma = np.sqrt(0.3)
        assert np.all(np.abs(m.rows.mean(axis=0) - spec.centroid(0)) <= 3 * sigma / np.sqrt(10))

    def test_no_outliers(self):
        m = generate_synthetic(SyntheticSpec(seed=3))
        assert -1 not in m.labels

    def test_outliers(self):
        m = generate_synthetic(SyntheticSpec(outlier_fraction=0.05, points_per_cluster=100, seed=3))
        assert np.sum(m.labels == -1) == 20

    def test_nearest_centroid_oracle(self):
        spec = SyntheticSpec(cluster_count=4, informative_features=8, points_per_cluster=500, seed=9)
        m = generate_synthetic(spec)
        centers = np.stack([spec.centroid(c) for c in range(4)])
        d = ((m.rows[:, None, :] - centers[None]) ** 2).sum(axis=2)
        assert np.mean(d.argmin(axis=1) == m.labels) >= 0.95

    def test_distractors_independent(self):
        spec = SyntheticSpec(informative_features=4, distractor_features=4, points_per_cluster=300, seed=2)
        m, informative = generate_with_roles(spec)
        assert len(informative) == 4 and set(informative) < set(m.feature_names)
        for j, name in enumerate(m.feature_names):
            r = abs(np.corrcoef(m.rows[:, j], m.labels)[0, 1])
            assert (r > 0.8) if name in informative else (r < 0.15)

    def test_deterministic(self):
        spec = SyntheticSpec(distractor_features=3, outlier_fraction=0.1, seed=42)
        assert generate_synthetic(spec).same_content(generate_synthetic(spec))
        assert not generate_synthetic(spec).same_content(generate_synthetic(replace(spec, seed=43)))

    @pytest.mark.parametrize("bad", [
        dict(variance=-1), dict(variance=0.5), dict(cluster_count=0), dict(outlier_fraction=0.3),
        dict(informative_features=15, distractor_features=6),
    ])
    def test_invalid(self, bad):
        with pytest.raises(InvalidSpec):
            generate_synthetic(SyntheticSpec(**bad))

    def test_paper_shape(self):
        specs = paper_shape_specs(7)
        assert len(specs) == 22 == len(PAPER_SHAPE)
        counts = [s.informative_features + s.distractor_features for s in specs]
        assert min(counts) == 4 and max(counts) == 16
        assert sum(s.subset.category == "STEM" for s in specs) == 11
        assert all(0.3 <= s.variance <= 0.4 for s in specs)


class TestWrite:
    def test_one_cell(self, tmp_path):
        m = FeatureMatrix(S21, ("quiz",), [[3]], learner_ids=("u1",))
        write_subset(m, tmp_path / "S2-1.csv")
        assert pivot(load_records(tmp_path / "S2-1.csv")).same_content(m)

    def test_labels_round_trip(self, tmp_path):
        m = FeatureMatrix("blob", ("forumng", "quiz"), [[0.25, 1.0], [0.1, 0.0]], labels=[1, -1])
        write_subset(m, tmp_path / "blob.csv")
        text = (tmp_path / "blob.csv").read_text()
        assert text.splitlines()[0] == "learner_id,forumng,quiz,label"
        assert read_matrix(tmp_path / "blob.csv").same_content(m)

    def test_integer_round_trip_and_bytes(self, tmp_path):
        rng = np.random.default_rng(8)
        x = rng.integers(1, 50, size=(100, 10))
        m = FeatureMatrix(S21, CATALOG[:10], x, learner_ids=[f"u{i}" for i in range(100)])
        a, b = tmp_path / "a" / "S2-1.csv", tmp_path / "b" / "S2-1.csv"
        for f in (a, b):
            f.parent.mkdir()
            write_subset(m, f)
        assert hashlib.sha256(a.read_bytes()).digest() == hashlib.sha256(b.read_bytes()).digest()
        assert b"\r" not in a.read_bytes()
        assert pivot(load_records(a)).same_content(m)

    def test_float_cells_shortest_repr(self, tmp_path):
        m = normalize(generate_synthetic(SyntheticSpec(seed=5)))
        write_subset(m, tmp_path / "s.csv")
        assert read_matrix(tmp_path / "s.csv").same_content(m)
