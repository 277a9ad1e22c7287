import numpy as np
import pytest

from cgpso.data import (Dataset, load_dataset_csv, save_dataset_csv,
                        split_dataset)
from cgpso.numerics import DimensionMismatch, RngStream


def toy_dataset(rng, n_outputs=2, input_dim=3, sizes=(9, 7)):
    inputs = [rng.standard_normal((sizes[d], input_dim))
              for d in range(n_outputs)]
    targets = [rng.standard_normal(sizes[d]) for d in range(n_outputs)]
    return Dataset(inputs=inputs, targets=targets)


class TestDataset:
    def test_shape_accessors(self):
        ds = toy_dataset(np.random.default_rng(0))
        assert ds.n_outputs == 2
        assert ds.input_dim == 3
        assert ds.sizes == [9, 7]
        assert ds.total_points == 16

    def test_stacked_targets_order(self):
        """Stacking concatenates output blocks in output order."""
        ds = toy_dataset(np.random.default_rng(1))
        y = ds.stacked_targets()
        np.testing.assert_array_equal(y[:9], ds.targets[0])
        np.testing.assert_array_equal(y[9:], ds.targets[1])

    def test_subset(self):
        ds = toy_dataset(np.random.default_rng(2))
        sub = ds.subset([[0, 3], [1]])
        assert sub.sizes == [2, 1]
        np.testing.assert_array_equal(sub.inputs[0], ds.inputs[0][[0, 3]])
        np.testing.assert_array_equal(sub.targets[1], ds.targets[1][[1]])

    def test_validate_rejects_bad_shapes(self):
        ds = toy_dataset(np.random.default_rng(3))
        with pytest.raises(DimensionMismatch):
            Dataset(inputs=ds.inputs, targets=[ds.targets[0]]).validate()
        with pytest.raises(DimensionMismatch):
            Dataset(inputs=ds.inputs,
                    targets=[ds.targets[0], ds.targets[1][:-1]]).validate()
        bad = [ds.inputs[0], ds.inputs[1][:, :2]]
        with pytest.raises(DimensionMismatch):
            Dataset(inputs=bad, targets=ds.targets).validate()


class TestCsvRoundTrip:
    def test_round_trip_exact(self, tmp_path):
        """Values survive a save/load cycle bit for bit."""
        ds = toy_dataset(np.random.default_rng(4))
        path = tmp_path / "ds.csv"
        save_dataset_csv(ds, path)
        back = load_dataset_csv(path)
        assert back.sizes == ds.sizes
        for d in range(ds.n_outputs):
            np.testing.assert_array_equal(back.inputs[d], ds.inputs[d])
            np.testing.assert_array_equal(back.targets[d], ds.targets[d])

    def test_header(self, tmp_path):
        ds = toy_dataset(np.random.default_rng(5))
        path = tmp_path / "ds.csv"
        save_dataset_csv(ds, path)
        header = path.read_text().splitlines()[0]
        assert header == "output_index,x_1,x_2,x_3,y"


class TestSplitDataset:
    def test_sizes_and_disjointness(self):
        full = toy_dataset(np.random.default_rng(6), sizes=(30, 30))
        train, val, test = split_dataset(full, n_train=10, n_val=5,
                                         n_test=8, rng=RngStream(0))
        assert train.sizes == [10, 10]
        assert val.sizes == [5, 5]
        assert test.sizes == [8, 8]
        # Disjoint: every selected row appears at most once across the splits.
        for d in range(2):
            rows = np.vstack([train.inputs[d], val.inputs[d], test.inputs[d]])
            assert len(np.unique(rows, axis=0)) == len(rows)

    def test_test_all_returns_full_pool(self):
        full = toy_dataset(np.random.default_rng(7), sizes=(20, 20))
        train, val, test = split_dataset(full, n_train=6, n_val=0,
                                         n_test="all", rng=RngStream(1))
        assert val is None
        assert test.sizes == [20, 20]
        np.testing.assert_array_equal(test.inputs[0], full.inputs[0])

    def test_seeded_split_is_reproducible(self):
        full = toy_dataset(np.random.default_rng(8), sizes=(25, 25))
        a = split_dataset(full, 8, 4, 6, rng=RngStream(42))
        b = split_dataset(full, 8, 4, 6, rng=RngStream(42))
        for part_a, part_b in zip(a, b):
            for d in range(2):
                np.testing.assert_array_equal(part_a.inputs[d],
                                              part_b.inputs[d])

    def test_overdraw_raises(self):
        full = toy_dataset(np.random.default_rng(9), sizes=(10, 10))
        with pytest.raises(DimensionMismatch):
            split_dataset(full, n_train=8, n_val=4, n_test=2,
                          rng=RngStream(0))
