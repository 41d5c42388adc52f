import numpy as np
import pytest

from gpexperts.bench.data import (
    GAP,
    load_csv,
    read_table,
    split_indices,
    synth_1d,
    synth_1d_arrays,
    synth_1d_test_arrays,
    synth_curve,
)
from gpexperts.bench.metrics import mean_nlpd, rmse
from gpexperts.errors import InvalidArgumentError, ParseError


def write(tmp_path, text, name="t.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


class TestCsv:
    def test_toy_round_trip(self, tmp_path):
        p = write(tmp_path, "a,b,target\n1,10,5\n2,20,7\n4,30,6\n")
        d = load_csv(p)
        assert (d.n, d.dim) == (3, 2)
        np.testing.assert_allclose(d.raw_X(), [[1, 10], [2, 20], [4, 30]], atol=1e-12)
        np.testing.assert_allclose(d.raw_y(), [5, 7, 6], atol=1e-12)

    def test_named_target(self, tmp_path):
        p = write(tmp_path, "a,y,b\n1,2,3\n4,5,6\n")
        X, y, names, target = read_table(p, "y")
        assert names == ["a", "b"] and target == "y"
        np.testing.assert_array_equal(X, [[1, 3], [4, 6]])
        np.testing.assert_array_equal(y, [2, 5])

    def test_non_numeric_cell_reports_location(self, tmp_path):
        p = write(tmp_path, "a,b\n1,2\n3,oops\n")
        with pytest.raises(ParseError, match=r":3: column 'b'"):
            read_table(p)

    def test_missing_cell(self, tmp_path):
        p = write(tmp_path, "a,b\n1,2\n3\n")
        with pytest.raises(ParseError, match=":3:"):
            read_table(p)

    def test_empty_and_missing(self, tmp_path):
        with pytest.raises(ParseError):
            read_table(write(tmp_path, ""))
        with pytest.raises(ParseError):
            read_table(write(tmp_path, "a,b\n"))
        with pytest.raises(ParseError):
            read_table(tmp_path / "nope.csv")
        with pytest.raises(ParseError):
            read_table(write(tmp_path, "a,b\n1,2\n"), "zzz")

    def test_constant_column(self, tmp_path):
        p = write(tmp_path, "a,b,y\n1,5,1\n1,6,2\n1,7,3\n")
        with pytest.warns(UserWarning):
            d = load_csv(p)
        assert d.feature_stds[0] == 1.0

    def test_fit_rows(self, tmp_path):
        p = write(tmp_path, "a,y\n0,0\n2,2\n100,100\n")
        d = load_csv(p, fit_rows=[0, 1])
        assert d.feature_means[0] == 1.0 and d.target_mean == 1.0


class TestSplit:
    def test_sizes_and_disjoint(self):
        tr, te = split_indices(1030, 0.1, seed=0)
        assert te.size == 103 and tr.size == 927
        assert np.intersect1d(tr, te).size == 0
        assert np.array_equal(np.sort(np.concatenate([tr, te])), np.arange(1030))

    def test_deterministic(self):
        a = split_indices(100, 0.2, 5)
        b = split_indices(100, 0.2, 5)
        assert all(np.array_equal(x, y) for x, y in zip(a, b))

    @pytest.mark.parametrize("f", [0.0, 1.0, -0.1])
    def test_bad_fraction(self, f):
        with pytest.raises(InvalidArgumentError):
            split_indices(10, f)


class TestSynthetic:
    def test_gap_and_size(self):
        x, y = synth_1d_arrays(300, seed=0, noise_std=0.1)
        assert x.shape == (300,) and y.shape == (300,)
        assert not np.any((x > GAP[0]) & (x < GAP[1]))
        assert x.min() >= -1 and x.max() <= 1
        assert np.any(x < GAP[0]) and np.any(x > GAP[1])

    def test_deterministic(self):
        a, b = synth_1d(100, seed=4), synth_1d(100, seed=4)
        np.testing.assert_array_equal(a.X, b.X)
        np.testing.assert_array_equal(a.y, b.y)

    def test_noiseless_on_curve(self):
        x, y = synth_1d_arrays(50, seed=1, noise_std=0.0)
        np.testing.assert_array_equal(y, np.sin(12 * x) + 0.66 * np.cos(25 * x))

    def test_standardized_recovers_raw(self):
        x, y = synth_1d_arrays(80, seed=2)
        d = synth_1d(80, seed=2)
        np.testing.assert_allclose(d.raw_X()[:, 0], x, atol=1e-12)
        np.testing.assert_allclose(d.raw_y(), y, atol=1e-12)

    def test_too_small(self):
        with pytest.raises(InvalidArgumentError):
            synth_1d_arrays(9)

    def test_test_points_cover_gap(self):
        x, y = synth_1d_test_arrays(2000, seed=0, noise_std=0.0)
        assert np.any((x > GAP[0]) & (x < GAP[1]))
        np.testing.assert_array_equal(y, synth_curve(x))
        xtr, _ = synth_1d_arrays(2000, seed=0)
        assert not np.array_equal(np.sort(x)[:10], np.sort(xtr)[:10])


class TestMetrics:
    def test_rmse_examples(self):
        assert rmse([1.0, 2.0], [1.0, 2.0]) == 0.0
        assert rmse([0, 0], [1, -1]) == 1.0
        assert rmse([1, 2, 3], [2, 2, 5]) == pytest.approx(np.sqrt(5 / 3), abs=1e-12)
        assert rmse([1, 2, 3], [2, 2, 5]) == pytest.approx(1.2910, abs=1e-4)

    def test_rmse_errors(self):
        with pytest.raises(InvalidArgumentError):
            rmse([], [])
        with pytest.raises(InvalidArgumentError):
            rmse([1.0], [1.0, 2.0])

    def test_mean_nlpd(self):
        assert mean_nlpd([0.0, 0.0], [1.0, 1.0], [0.0, 1.0]) == pytest.approx(0.5 * (0.91894 + 1.41894), abs=1e-5)
