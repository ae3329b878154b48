import io

import numpy as np
import pytest

from rdglobal.data import Dataset, read_csv, write_csv
from rdglobal.errors import DataError


class TestDataset:
    def test_vector_becomes_column(self):
        d = Dataset(np.arange(4.0))
        assert d.X.shape == (4, 1) and d.d == 1 and d.x_names == ("x1",)

    def test_length_mismatch(self):
        with pytest.raises(DataError):
            Dataset(np.zeros((3, 2)), np.zeros(4))

    def test_standardized(self):
        X = np.random.default_rng(0).normal(0, [2.0, 5.0], size=(500, 2))
        s = Dataset(X).standardized()
        np.testing.assert_allclose(s.X.std(axis=0, ddof=1), 1.0, atol=1e-12)
        np.testing.assert_allclose(s.X * s.scale, X, atol=1e-12)

    def test_constant_column_cannot_be_standardized(self):
        with pytest.raises(DataError):
            Dataset(np.ones((5, 2))).standardized()


class TestCsv:
    def test_round_trip_exact(self, tmp_path):
        rng = np.random.default_rng(1)
        cols = {"a": rng.normal(size=20), "b": rng.normal(size=20), "y": rng.normal(size=20)}
        path = tmp_path / "d.csv"
        write_csv(path, cols)
        d = read_csv(path, ["b", "a"], "y")
        np.testing.assert_array_equal(d.X, np.column_stack([cols["b"], cols["a"]]))
        np.testing.assert_array_equal(d.Y, cols["y"])

    def test_stream_target(self):
        buf = io.StringIO()
        write_csv(buf, {"x": np.array([0.1, 0.2]), "k": np.array([1, 2])})
        assert buf.getvalue() == "x,k\n0.1,1\n0.2,2\n"

    def test_missing_column_named(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("x1,x2\n1,2\n")
        with pytest.raises(DataError, match="'y'"):
            read_csv(path, ["x1", "x2"], "y")

    @pytest.mark.parametrize("body", ["x1,y\n1,abc\n", "x1,y\n1\n", "x1,y\n1,nan\n", ""])
    def test_bad_content(self, tmp_path, body):
        path = tmp_path / "d.csv"
        path.write_text(body)
        with pytest.raises(DataError):
            read_csv(path, ["x1"], "y")

    def test_unreadable(self, tmp_path):
        with pytest.raises(DataError):
            read_csv(tmp_path / "absent.csv", ["x1"])
