"""Dataset generators, CSV loading, splits, normalization."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from partial_bnn.data import (
    TEST,
    TRAIN,
    VAL,
    Dataset,
    destandardize,
    gen_sine_large,
    gen_sine_small,
    load_csv,
    make_split,
    standardize,
)


class TestGenerators:
    def test_sine_small_shapes_and_ranges(self):
        ds = gen_sine_small(seed=0)
        assert ds.n == 50 and ds.n_features == 1
        x = ds.x[:, 0]
        low, high = x[:25], x[25:]
        assert np.all((low > -3.0) & (low < -1.7))
        assert np.all((high > 2.2) & (high < 4.0))
        assert not np.any((x >= -1.7) & (x <= 2.2))

    def test_sine_small_split_counts(self):
        ds = gen_sine_small(seed=0)
        assert np.sum(ds.split == TRAIN) == 35
        assert np.sum(ds.split == VAL) == 10
        assert np.sum(ds.split == TEST) == 5

    def test_sine_large_counts(self):
        ds = gen_sine_large(seed=1)
        assert ds.n == 1400
        x = ds.x[:, 0]
        assert np.all((x[:700] > -2.0) & (x[:700] < -1.4))
        assert np.all((x[700:] > 2.0) & (x[700:] < 2.8))
        assert np.sum(ds.split == TRAIN) == 980
        assert np.sum(ds.split == VAL) == 280
        assert np.sum(ds.split == TEST) == 140

    def test_noise_free_curve(self):
        # with noise_std=0 the targets land exactly on the generating curve
        ds = gen_sine_small(seed=3, noise_std=0.0)
        expected = [math.sin(4.0 * (v - 4.3)) for v in ds.x[:, 0]]
        np.testing.assert_allclose(ds.y[:, 0], expected, rtol=0, atol=1e-15)

    def test_bit_identical_regeneration(self):
        a, b = gen_sine_small(seed=9), gen_sine_small(seed=9)
        np.testing.assert_array_equal(a.x, b.x)
        np.testing.assert_array_equal(a.y, b.y)
        np.testing.assert_array_equal(a.split, b.split)
        c = gen_sine_small(seed=10)
        assert not np.array_equal(a.x, c.x)

    def test_noise_level_scales(self):
        quiet = gen_sine_small(seed=5, noise_std=0.0)
        loud = gen_sine_small(seed=5, noise_std=0.5)
        resid = loud.y - quiet.y
        assert 0.2 < resid.std() < 0.9


class TestCsv:
    def write(self, tmp_path, text):
        p = tmp_path / "t.csv"
        p.write_text(text)
        return str(p)

    def test_basic_load(self, tmp_path):
        path = self.write(tmp_path, "a,b,y\n1,2,3\n4,5,6\n")
        ds = load_csv(path, ["y"])
        assert ds.feature_names == ("a", "b")
        assert ds.target_names == ("y",)
        np.testing.assert_array_equal(ds.x, [[1, 2], [4, 5]])
        np.testing.assert_array_equal(ds.y, [[3], [6]])
        assert np.all(ds.split == TRAIN)

    def test_non_numeric_names_location(self, tmp_path):
        path = self.write(tmp_path, "a,y\n1,2\nfoo,4\n")
        with pytest.raises(ValueError, match="row 3.*'a'"):
            load_csv(path, ["y"])

    def test_ragged_row_named(self, tmp_path):
        path = self.write(tmp_path, "a,y\n1,2\n3\n")
        with pytest.raises(ValueError, match="row 3"):
            load_csv(path, ["y"])

    def test_missing_target(self, tmp_path):
        path = self.write(tmp_path, "a,y\n1,2\n")
        with pytest.raises(ValueError, match="target"):
            load_csv(path, ["z"])

    def test_empty_file(self, tmp_path):
        with pytest.raises(ValueError, match="empty"):
            load_csv(self.write(tmp_path, ""), ["y"])

    def test_header_only(self, tmp_path):
        with pytest.raises(ValueError, match="no data rows"):
            load_csv(self.write(tmp_path, "a,y\n"), ["y"])


def toy(n, n_features=1, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, n_features))
    y = rng.standard_normal((n, 1))
    return Dataset(x, y)


class TestSplits:
    def test_gap_holds_out_central_ranks(self):
        ds = toy(100, seed=2)
        out = make_split(ds, kind="gap", seed=0, test_fraction=0.1)
        order = np.argsort(ds.x[:, 0], kind="stable")
        expected_test = set(order[45:55])
        assert set(np.flatnonzero(out.split == TEST)) == expected_test
        assert np.sum(out.split == TEST) == 10

    def test_gap_start_formula_odd_remainder(self):
        # N=10, fraction 0.25: n_test=ceil(2.5)=3, start=(10-3)//2=3 -> ranks 3,4,5
        ds = toy(10, seed=4)
        out = make_split(ds, kind="gap", seed=0, test_fraction=0.25, val_fraction=0.0)
        order = np.argsort(ds.x[:, 0], kind="stable")
        assert set(np.flatnonzero(out.split == TEST)) == set(order[3:6])

    def test_standard_tiny_dataset_one_test_point(self):
        ds = toy(10, seed=1)
        out = make_split(ds, kind="standard", seed=0, test_fraction=0.1, val_fraction=0.0)
        assert np.sum(out.split == TEST) == 1
        assert np.sum(out.split == TRAIN) == 9

    def test_gap_invariant_under_monotone_transform(self):
        ds = toy(60, seed=7)
        transformed = Dataset(np.exp(3.0 * ds.x) + 1.0, ds.y)
        a = make_split(ds, kind="gap", seed=5, test_fraction=0.2)
        b = make_split(transformed, kind="gap", seed=5, test_fraction=0.2)
        np.testing.assert_array_equal(a.split, b.split)

    def test_val_carved_from_train(self):
        ds = toy(100, seed=3)
        out = make_split(ds, kind="standard", seed=1, test_fraction=0.1, val_fraction=0.2)
        assert np.sum(out.split == TEST) == 10
        # 20% of the 90 remaining
        assert np.sum(out.split == VAL) == 18
        assert np.sum(out.split == TRAIN) == 72

    def test_split_feature_index(self):
        ds = toy(40, n_features=3, seed=8)
        a = make_split(ds, kind="gap", seed=0, feature_index=2, test_fraction=0.2)
        order = np.argsort(ds.x[:, 2], kind="stable")
        n_test = int(math.ceil(0.2 * 40))
        start = (40 - n_test) // 2
        assert set(np.flatnonzero(a.split == TEST)) == set(order[start : start + n_test])
        with pytest.raises(ValueError):
            make_split(ds, kind="gap", feature_index=3)

    def test_seed_controls_standard_split(self):
        ds = toy(50, seed=0)
        a = make_split(ds, kind="standard", seed=1)
        b = make_split(ds, kind="standard", seed=1)
        c = make_split(ds, kind="standard", seed=2)
        np.testing.assert_array_equal(a.split, b.split)
        assert not np.array_equal(a.split, c.split)

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            make_split(toy(10), kind="random")

    def test_input_not_mutated(self):
        ds = toy(30, seed=6)
        before = ds.split.copy()
        make_split(ds, kind="standard", seed=0)
        np.testing.assert_array_equal(ds.split, before)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(12, 200), st.floats(0.05, 0.4))
    def test_gap_block_is_contiguous_in_rank(self, n, frac):
        ds = toy(n, seed=n)
        out = make_split(ds, kind="gap", seed=0, test_fraction=frac, val_fraction=0.0)
        order = np.argsort(ds.x[:, 0], kind="stable")
        flags = (out.split == TEST)[order]
        picked = np.flatnonzero(flags)
        n_test = int(math.ceil(frac * n))
        assert len(picked) == n_test
        assert picked[0] == (n - n_test) // 2
        assert np.all(np.diff(picked) == 1)


class TestStandardize:
    def test_small_integer_example(self):
        # train column {0,1,2}: mean 1, sample std 1 -> {-1, 0, 1}
        x = np.array([[0.0], [1.0], [2.0]])
        y = np.zeros((3, 1))
        ds = standardize(Dataset(x, y))
        np.testing.assert_allclose(ds.x[:, 0], [-1.0, 0.0, 1.0], atol=1e-15)

    def test_train_only_statistics(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((20, 2))
        split = np.array([TRAIN] * 10 + [TEST] * 10, dtype=np.int8)
        base = Dataset(x, np.zeros((20, 1)), split=split)
        a = standardize(base)
        # perturbing only test rows must not move the statistics
        x2 = x.copy()
        x2[10:] += 100.0
        b = standardize(Dataset(x2, np.zeros((20, 1)), split=split))
        np.testing.assert_array_equal(a.feature_mean, b.feature_mean)
        np.testing.assert_array_equal(a.feature_std, b.feature_std)
        np.testing.assert_array_equal(a.x[:10], b.x[:10])

    def test_constant_column_floored(self):
        x = np.column_stack([np.ones(5), np.arange(5.0)])
        ds = standardize(Dataset(x, np.zeros((5, 1))))
        assert np.all(np.isfinite(ds.x))
        assert ds.feature_std[0] == pytest.approx(1e-12)

    def test_roundtrip(self):
        rng = np.random.default_rng(3)
        base = Dataset(rng.standard_normal((15, 3)) * 7 + 2, rng.standard_normal((15, 1)))
        back = destandardize(standardize(base))
        np.testing.assert_allclose(back.x, base.x, rtol=1e-12)

    def test_destandardize_requires_stats(self):
        with pytest.raises(ValueError):
            destandardize(toy(5))

    def test_empty_train_rejected(self):
        ds = Dataset(np.ones((3, 1)), np.ones((3, 1)), split=np.full(3, TEST, dtype=np.int8))
        with pytest.raises(ValueError):
            standardize(ds)

    def test_csv_normalize_flag(self, tmp_path):
        p = tmp_path / "n.csv"
        p.write_text("a,y\n0,0\n1,0\n2,0\n")
        ds = load_csv(str(p), ["y"], normalize=True)
        np.testing.assert_allclose(ds.x[:, 0], [-1.0, 0.0, 1.0], atol=1e-15)


class TestDatasetValidation:
    def test_shape_checks(self):
        with pytest.raises(ValueError):
            Dataset(np.ones((3, 2)), np.ones((4, 1)))
        with pytest.raises(ValueError):
            Dataset(np.ones((3, 2)), np.ones((3, 1)), split=np.zeros(2, dtype=np.int8))

    def test_role_views(self):
        x = np.arange(6.0).reshape(6, 1)
        y = x * 2
        split = np.array([0, 0, 1, 1, 2, 2], dtype=np.int8)
        ds = Dataset(x, y, split=split)
        tx, ty = ds.train
        np.testing.assert_array_equal(tx[:, 0], [0, 1])
        vx, _ = ds.val
        np.testing.assert_array_equal(vx[:, 0], [2, 3])
        sx, sy = ds.test
        np.testing.assert_array_equal(sy[:, 0], [8, 10])
