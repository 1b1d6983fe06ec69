import io

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from pvar.data import DatasetConfig, apply_transform, ingest, read_csv, write_series_csv
from pvar.exceptions import DimensionMismatch, NonNumeric, ParseError, TooShort


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return str(path)


def config(path, **kw):
    base = dict(path=path, season_length=kw.pop("s", 1))
    base.update(kw)
    return DatasetConfig(**base)


class TestReadCsv:
    def test_selects_columns(self, tmp_path):
        p = write(tmp_path / "a.csv", "date,x,y\n2020-01-01,1,2\n2020-01-02,3,4\n")
        names, values = read_csv(p, ["y"])
        assert names == ["y"]
        assert_array_equal(values, [[2.0], [4.0]])

    def test_quoted_fields(self, tmp_path):
        p = write(tmp_path / "a.csv", '"x","note"\n1.5,"a, b"\n2.5,"c"\n')
        _, values = read_csv(p, ["x"])
        assert_array_equal(values[:, 0], [1.5, 2.5])

    def test_non_numeric_reports_line(self, tmp_path):
        p = write(tmp_path / "a.csv", "x\n1\n2\nabc\n")
        with pytest.raises(NonNumeric) as info:
            read_csv(p)
        assert info.value.column == "x" and info.value.line == 4

    def test_ragged_row(self, tmp_path):
        p = write(tmp_path / "a.csv", "x,y\n1,2\n3\n")
        with pytest.raises(ParseError) as info:
            read_csv(p)
        assert info.value.line == 3

    def test_unknown_column(self, tmp_path):
        p = write(tmp_path / "a.csv", "x\n1\n")
        with pytest.raises(ParseError):
            read_csv(p, ["z"])


class TestIngest:
    def test_constant_log_returns_zero(self, tmp_path):
        p = write(tmp_path / "a.csv", "x\n" + "5\n" * 9)
        series, info = ingest(config(p, s=4, transform="log_return", demean_seasonal=False))
        assert_array_equal(series.values, 0.0)
        assert info.n_transformed == 8

    def test_log_return_definition(self):
        x = np.array([[100.0], [110.0], [99.0]])
        assert_allclose(apply_transform(x, "log_return")[:, 0], 100 * np.log([1.1, 0.9]))

    def test_demeaned_seasons(self, tmp_path):
        rng = np.random.default_rng(0)
        rows = "\n".join(f"{a},{b}" for a, b in rng.normal(3.0, 2.0, (60, 2)))
        p = write(tmp_path / "a.csv", "x,y\n" + rows + "\n")
        series, info = ingest(config(p, s=5))
        for v in range(5):
            assert np.all(np.abs(series.season(v).mean(axis=1)) < 1e-12)
        assert info.mu.shape == (5, 2)

    def test_whole_year_truncation_from_front(self, tmp_path):
        prices = 100 * np.exp(np.cumsum(np.random.default_rng(1).normal(0, 0.01, 7062)))
        p = write(tmp_path / "a.csv", "close\n" + "\n".join(format(x, ".17g") for x in prices) + "\n")
        series, info = ingest(config(p, s=5, transform="log_return", demean_seasonal=False))
        assert series.n == 7060
        assert info.n_dropped == 1
        expected = 100 * np.diff(np.log(prices))[1:]
        assert_allclose(series.values[0], expected)

    def test_truncate_back(self, tmp_path):
        p = write(tmp_path / "a.csv", "x\n1\n2\n3\n4\n5\n")
        series, _ = ingest(config(p, s=2, truncate="back", demean_seasonal=False))
        assert_array_equal(series.values, [[1, 2, 3, 4]])

    def test_partial_years_rejected_when_asked(self, tmp_path):
        p = write(tmp_path / "a.csv", "x\n1\n2\n3\n")
        with pytest.raises(DimensionMismatch):
            ingest(config(p, s=2, drop_partial_years=False))

    def test_too_short(self, tmp_path):
        p = write(tmp_path / "a.csv", "x\n1\n2\n")
        with pytest.raises(TooShort):
            ingest(config(p, s=4))

    def test_log_needs_positive(self, tmp_path):
        p = write(tmp_path / "a.csv", "x\n1\n-2\n")
        with pytest.raises(ValueError):
            ingest(config(p, transform="log"))

    def test_relative_path_in_json(self, tmp_path):
        write(tmp_path / "a.csv", "x\n1\n2\n")
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text('{"path": "a.csv", "season_length": 1}')
        cfg = DatasetConfig.from_json(str(cfg_path))
        assert cfg.path == str(tmp_path / "a.csv")


class TestWrite:
    def test_seventeen_digit_round_trip(self, tmp_path):
        values = np.random.default_rng(2).standard_normal((12, 2)) * 1e3
        buf = io.StringIO()
        write_series_csv(buf, values)
        p = write(tmp_path / "a.csv", buf.getvalue())
        names, back = read_csv(p)
        assert names == ["y1", "y2"]
        assert_array_equal(back, values)
