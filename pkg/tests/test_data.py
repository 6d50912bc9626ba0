import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from macroenergy.data import (
    ReturnPanel,
    TimeSeriesPanel,
    cumulate_returns,
    describe,
    load_panel,
    split,
    to_log_returns,
)
from macroenergy.exceptions import DataError


def _write(tmp_path, text, name="p.csv"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def _months(n, start="2001-01"):
    return np.arange(np.datetime64(start, "M"), np.datetime64(start, "M") + n)


class TestLoadPanel:
    def test_shape_and_sorting(self, tmp_path):
        p = _write(tmp_path, "date,a,b\n2001-03-01,3,30\n2001-01-01,1,10\n2001-02,2,20\n")
        panel = load_panel(p)
        assert (panel.T, panel.K) == (3, 2)
        assert_array_equal(panel.values[:, 0], [1, 2, 3])
        assert str(panel.dates[0]) == "2001-01"

    def test_fred_style_319_rows(self, tmp_path):
        from conftest import write_panel_csv

        p = write_panel_csv(tmp_path / "f.csv", T=319, K=7, start="1999-01-01")
        panel = load_panel(p)
        assert (panel.T, panel.K) == (319, 7)
        assert str(panel.dates[-1]) == "2025-07"

    def test_one_row(self, tmp_path):
        with pytest.raises(DataError, match="fewer than 2 usable rows"):
            load_panel(_write(tmp_path, "date,a,b\n2001-01,1,2\n"))

    def test_duplicate_date(self, tmp_path):
        with pytest.raises(DataError, match="duplicate date"):
            load_panel(_write(tmp_path, "date,a,b\n2020-03,1,2\n2020-03-01,1,2\n2020-04,1,2\n"))

    def test_unparseable_date(self, tmp_path):
        with pytest.raises(DataError, match="unparseable date"):
            load_panel(_write(tmp_path, "date,a,b\nMarch 2020,1,2\n2020-04,1,2\n"))

    def test_non_numeric(self, tmp_path):
        with pytest.raises(DataError, match="non-numeric"):
            load_panel(_write(tmp_path, "date,a,b\n2020-03,1,x\n2020-04,1,2\n"))

    def test_missing_cells_rejected(self, tmp_path):
        p = _write(tmp_path, "date,a,b\n2020-01,1,2\n2020-02,,2\n2020-03,1,2\n")
        with pytest.raises(DataError, match="2020-02"):
            load_panel(p)

    def test_missing_ragged_edge_dropped(self, tmp_path):
        p = _write(tmp_path, "date,a,b\n2020-01,1,\n2020-02,1,2\n2020-03,1,2\n")
        panel = load_panel(p, on_missing="drop")
        assert panel.T == 2
        assert panel.rejected_rows == ("2020-01",)

    def test_gap_is_error(self, tmp_path):
        with pytest.raises(DataError):
            load_panel(_write(tmp_path, "date,a,b\n2020-01,1,2\n2020-03,1,2\n"))

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError):
            load_panel(tmp_path / "nope.csv")


class TestReturns:
    def _panel(self, col):
        col = np.asarray(col, dtype=float)
        return TimeSeriesPanel(_months(len(col)), ["x", "y"], np.column_stack([col, np.ones_like(col)]))

    def test_constant_series(self):
        assert_array_equal(to_log_returns(self._panel([5, 5, 5])).values[:, 0], [0, 0])

    def test_analytic(self):
        r = to_log_returns(self._panel([1, np.e, np.e**2]))
        assert_allclose(r.values[:, 0], [1, 1], rtol=1e-14)
        assert r.T == 2

    def test_zero_level(self):
        with pytest.raises(DataError, match="log undefined"):
            to_log_returns(self._panel([1, 0, 2]))

    def test_round_trip(self):
        rng = np.random.default_rng(3)
        lv = np.exp(np.cumsum(rng.normal(0, 0.05, (200, 3)), axis=0)) * [10, 50, 2]
        panel = TimeSeriesPanel(_months(200), list("abc"), lv)
        back = cumulate_returns(lv[0], to_log_returns(panel))
        assert_allclose(back, lv, rtol=1e-10)


class TestDescribe:
    def test_normal_moments(self):
        x = np.random.default_rng(0).standard_normal((10000, 2))
        d = describe(ReturnPanel(_months(10000, "1000-01"), ["a", "b"], x))
        assert np.all(np.abs(d.skewness) < 0.1)
        assert np.all(np.abs(d.kurtosis) < 0.2)

    def test_two_point_symmetric(self):
        x = np.tile([-1.0, 1.0], 50)
        d = describe(ReturnPanel(_months(100), ["a", "b"], np.column_stack([x, 2 * x])))
        assert_array_equal(d.skewness, [0.0, 0.0])

    def test_permutation_invariance(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal((50, 2))
        a = describe(ReturnPanel(_months(50), ["a", "b"], x))
        b = describe(ReturnPanel(_months(50), ["a", "b"], x[rng.permutation(50)]))
        for f in ("mean", "std", "min", "max"):
            assert_allclose(getattr(a, f), getattr(b, f), rtol=1e-13)

    def test_invariants_and_csv(self):
        x = np.random.default_rng(2).standard_normal((20, 2))
        d = describe(ReturnPanel(_months(20), ["a", "b"], x))
        assert np.all(d.std >= 0)
        assert np.all((d.min <= d.mean) & (d.mean <= d.max))
        assert d.to_csv().splitlines()[0] == "series,mean,std,skewness,kurtosis,min,max"

    def test_too_short(self):
        with pytest.raises(DataError):
            describe(ReturnPanel(_months(3), ["a", "b"], np.ones((3, 2))))


class TestSplit:
    def _rp(self, n=30):
        return ReturnPanel(_months(n, "2021-01"), ["a", "b"], np.zeros((n, 2)))

    def test_partition(self):
        rp = self._rp()
        sp = split(rp, "2022-03")
        assert str(rp.dates[sp.boundary]) == "2022-03"
        assert list(sp.in_sample) + list(sp.out_of_sample) == list(range(rp.T))

    def test_first_date(self):
        with pytest.raises(DataError):
            split(self._rp(), "2021-01")

    def test_last_date(self):
        rp = self._rp()
        sp = split(rp, str(rp.dates[-1]))
        assert len(sp.out_of_sample) == 1

    def test_outside(self):
        with pytest.raises(DataError):
            split(self._rp(), "2030-01-01")

    def test_reference_window_length(self):
        # returns Feb 1999..Jul 2025; first forecast month Mar 2023
        rp = ReturnPanel(_months(318, "1999-02"), ["a", "b"], np.zeros((318, 2)))
        sp = split(rp, "2023-03")
        assert len(sp.out_of_sample) == 29
