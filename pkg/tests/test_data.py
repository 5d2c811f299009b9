import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from mtlshare.data import (
    DataError,
    MultiTaskDataset,
    SyntheticTaskSpec,
    TaskDataset,
    default_ratio,
    gen_synthetic_pair,
    load_csv,
)


def _task(name, m, n_classes=2, dim=3, train=None):
    train = m if train is None else train
    feats = np.arange(m * dim, dtype=float).reshape(m, dim)
    return TaskDataset(name, feats, np.arange(m) % n_classes, n_classes, np.arange(train), np.arange(train, m))


class TestSynthetic:
    def test_rho_one_is_label_permutation(self):
        a, b = gen_synthetic_pair(SyntheticTaskSpec(samples_a=2000, samples_b=500, rho=1.0))
        la, lb = a.labels[:500], b.labels
        for c in range(4):
            assert len(set(lb[la == c])) == 1
        assert len(set(lb)) == 4

    def test_rho_zero_is_independent(self):
        a, b = gen_synthetic_pair(SyntheticTaskSpec(samples_a=5000, samples_b=5000, rho=0.0, seed=3))
        table = np.zeros((4, 4))
        np.add.at(table, (a.labels, b.labels), 1)
        assert stats.chi2_contingency(table).pvalue > 0.01

    def test_partial_relatedness(self):
        a, b = gen_synthetic_pair(SyntheticTaskSpec(samples_a=4000, samples_b=4000, rho=0.5, seed=1))
        rel = gen_synthetic_pair(SyntheticTaskSpec(samples_a=10, samples_b=10, rho=1.0, seed=1))
        perm = {int(x): int(y) for x, y in zip(rel[0].labels, rel[1].labels)}
        agree = np.mean([perm.get(int(x), -1) == y for x, y in zip(a.labels, b.labels)])
        # rho + (1 - rho) / n_classes chance agreement
        assert agree == pytest.approx(0.5 + 0.5 / 4, abs=0.03)

    def test_deterministic(self):
        spec = SyntheticTaskSpec(samples_a=50, samples_b=20, seed=9)
        (a1, b1), (a2, b2) = gen_synthetic_pair(spec), gen_synthetic_pair(spec)
        np.testing.assert_array_equal(a1.features, a2.features)
        np.testing.assert_array_equal(b1.test_idx, b2.test_idx)

    def test_sizes_and_split(self):
        a, b = gen_synthetic_pair(SyntheticTaskSpec(samples_a=400, samples_b=40))
        assert (len(a.train_idx), len(a.test_idx)) == (300, 100)
        assert (len(b.train_idx), len(b.test_idx)) == (30, 10)

    def test_image_shape(self):
        a, _ = gen_synthetic_pair(SyntheticTaskSpec(dim=16, samples_a=5, samples_b=5, image=True))
        assert a.sample_shape == (1, 4, 4)

    @pytest.mark.parametrize("kw,msg", [
        (dict(rho=1.5), "rho"),
        (dict(dim=3, n_classes=4), "latent dim"),
        (dict(dim=15, image=True), "square dim"),
    ])
    def test_invalid(self, kw, msg):
        with pytest.raises(DataError, match=msg):
            gen_synthetic_pair(SyntheticTaskSpec(**kw))


class TestCsv:
    def test_reindexes_labels(self, tmp_path):
        p = tmp_path / "t.csv"
        p.write_text("x1,x2,y\n1,2,10\n3,4,30\n5,6,10\n7,8,20\n")
        t = load_csv(p, test_fraction=0.25)
        assert t.n_classes == 3
        assert t.label_values == [10, 20, 30]
        np.testing.assert_array_equal(t.labels, [0, 2, 0, 1])
        np.testing.assert_array_equal(t.features[3], [7.0, 8.0])
        assert len(t.test_idx) == 1

    def test_named_columns(self, tmp_path):
        p = tmp_path / "t.csv"
        p.write_text("label,a,b\n0,1,2\n1,3,4\n")
        t = load_csv(p, feature_columns=["b"], label_column="label", test_fraction=0.0)
        np.testing.assert_array_equal(t.features[:, 0], [2.0, 4.0])

    def test_non_numeric_names_row_and_column(self, tmp_path):
        p = tmp_path / "t.csv"
        p.write_text("x,y\n1,0\nabc,1\n")
        with pytest.raises(DataError, match=r"row 3, column 'x'"):
            load_csv(p)

    def test_ragged_row(self, tmp_path):
        p = tmp_path / "t.csv"
        p.write_text("x,y\n1,0\n2\n")
        with pytest.raises(DataError, match="row 3 has 1 cells"):
            load_csv(p)

    def test_missing_label_column(self, tmp_path):
        p = tmp_path / "t.csv"
        p.write_text("x,y\n1,0\n")
        with pytest.raises(DataError, match="label column 'z'"):
            load_csv(p, label_column="z")

    def test_empty(self, tmp_path):
        p = tmp_path / "t.csv"
        p.write_text("")
        with pytest.raises(DataError, match="empty file"):
            load_csv(p)
        p.write_text("x,y\n")
        with pytest.raises(DataError, match="no data rows"):
            load_csv(p)


class TestTaskDataset:
    def test_label_range(self):
        with pytest.raises(DataError, match=r"\[0, 2\)"):
            TaskDataset("t", np.zeros((2, 1)), [0, 2], 2, [0], [1])

    def test_split_must_cover(self):
        with pytest.raises(DataError, match="disjoint"):
            TaskDataset("t", np.zeros((3, 1)), [0, 1, 0], 2, [0, 1], [1])

    def test_standardized_uses_train_stats(self):
        t = _task("t", 10, train=6).standardized()
        np.testing.assert_allclose(t.train_features.mean(axis=0), 0.0, atol=1e-12)
        np.testing.assert_allclose(t.train_features.std(axis=0), 1.0, atol=1e-12)


class TestRatio:
    def test_examples(self):
        assert default_ratio([750, 150], 8) == [7, 1]
        assert default_ratio([100, 100], 8) == [4, 4]
        assert default_ratio([10000, 1], 8) == [7, 1]

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.integers(1, 10000), min_size=1, max_size=6), st.integers(0, 30))
    def test_sums_to_batch(self, sizes, extra):
        batch = len(sizes) + extra
        r = default_ratio(sizes, batch)
        assert sum(r) == batch and min(r) >= 1

    def test_batch_too_small(self):
        with pytest.raises(DataError, match="cannot hold"):
            default_ratio([5, 5, 5], 2)

    @pytest.mark.parametrize("ratio,msg", [([8, 0], "every batch must contain"), ([4, 3], "sums to 7"), ([8], "1 ratio entries")])
    def test_invalid_ratio(self, ratio, msg):
        with pytest.raises(DataError, match=msg):
            MultiTaskDataset([_task("a", 10), _task("b", 10)], batch_size=8, ratio=ratio)


class TestSampler:
    def test_batch_composition(self):
        mtds = MultiTaskDataset([_task("a", 40), _task("b", 10)], batch_size=5)
        batch = mtds.next_batch()
        assert [len(y) for y in batch.labels] == mtds.ratio == [4, 1]
        assert batch.size == 5 and mtds.iteration == 1

    def test_each_epoch_is_a_permutation(self):
        mtds = MultiTaskDataset([_task("a", 12), _task("b", 12)], batch_size=6, ratio=[3, 3])
        seen = np.concatenate([mtds.next_batch().features[0][:, 0] for _ in range(8)])
        first, second = seen[:12], seen[12:24]
        np.testing.assert_array_equal(np.sort(first), np.sort(second))
        assert len(set(first)) == 12
        assert not np.array_equal(first, second)

    def test_wrap_counts(self):
        # 200 draws from 30 training samples: every sample appears 6 or 7 times
        mtds = MultiTaskDataset([_task("a", 30), _task("b", 100)], batch_size=8, ratio=[4, 4])
        draws = np.concatenate([mtds.next_batch().features[0][:, 0] for _ in range(50)])
        _, counts = np.unique(draws, return_counts=True)
        assert len(counts) == 30 and set(counts) <= {6, 7}

    def test_only_train_split(self):
        mtds = MultiTaskDataset([_task("a", 10, train=4), _task("b", 10, train=4)], batch_size=2)
        rows = {int(mtds.next_batch().features[0][0, 0]) for _ in range(20)}
        assert rows <= {0, 3, 6, 9}

    def test_state_roundtrip(self):
        tasks = [_task("a", 13), _task("b", 7)]
        a = MultiTaskDataset(tasks, batch_size=4, seed=2)
        for _ in range(9):
            a.next_batch()
        b = MultiTaskDataset(tasks, batch_size=4, seed=2)
        b.load_state_dict(a.state_dict())
        for _ in range(10):
            x, y = a.next_batch(), b.next_batch()
            for fx, fy in zip(x.features, y.features):
                np.testing.assert_array_equal(fx, fy)

    def test_empty_train_split(self):
        with pytest.raises(DataError, match="empty training split"):
            MultiTaskDataset([_task("a", 4), _task("b", 4, train=0)], batch_size=2)


class TestWorkedExamples:
    def test_rho_one_zero_noise_exact_permutation(self):
        a, b = gen_synthetic_pair(SyntheticTaskSpec(samples_a=300, samples_b=300, rho=1.0, noise=0.0))
        mapping = {}
        for x, y in zip(a.labels, b.labels):
            assert mapping.setdefault(int(x), int(y)) == y
        assert sorted(mapping.values()) == sorted(mapping)
        np.testing.assert_array_equal(a.features, b.features)

    def test_csv_four_rows_half_split(self, tmp_path):
        p = tmp_path / "t.csv"
        p.write_text("x,y\n1,3\n2,7\n3,3\n4,7\n")
        t = load_csv(p, test_fraction=0.5, seed=4)
        assert (len(t.train_idx), len(t.test_idx)) == (2, 2)
        assert t.label_values == [3, 7] and set(t.labels) == {0, 1}
        again = load_csv(p, test_fraction=0.5, seed=4)
        np.testing.assert_array_equal(t.test_idx, again.test_idx)

    def test_ratio_four_four(self):
        mtds = MultiTaskDataset([_task("a", 20), _task("b", 20)], batch_size=8, ratio=[4, 4])
        b = mtds.next_batch()
        assert [len(y) for y in b.labels] == [4, 4] and b.task_ids == [0, 1]

    def test_three_samples_ten_batches(self):
        mtds = MultiTaskDataset([_task("a", 3), _task("b", 10)], batch_size=4, ratio=[2, 2])
        draws = np.concatenate([mtds.next_batch().features[0][:, 0] for _ in range(10)])
        _, counts = np.unique(draws, return_counts=True)
        assert len(counts) == 3 and all(6 <= c <= 7 for c in counts)

    @pytest.mark.parametrize("m,r", [(12, 3), (10, 3), (7, 2)])
    def test_epoch_windows_cover_training_set(self, m, r):
        # from the sampler's first draw, every M consecutive draws of task k form one full epoch
        mtds = MultiTaskDataset([_task("a", m), _task("b", 5)], batch_size=r + 1, ratio=[r, 1])
        draws = np.concatenate([mtds.next_batch().features[0][:, 0] for _ in range(5 * m)])
        for e in range(4):
            window = draws[e * m:(e + 1) * m]
            np.testing.assert_array_equal(np.sort(window), np.arange(m) * 3.0)

    def test_seed_fixes_stream(self):
        tasks = [_task("a", 9), _task("b", 4)]
        x = [MultiTaskDataset(tasks, 4, seed=6).next_batch().features[0] for _ in range(2)]
        np.testing.assert_array_equal(x[0], x[1])
