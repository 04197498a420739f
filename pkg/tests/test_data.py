import numpy as np
import pytest

from pmlgamm import DataFormatError, DomainError, from_arrays, from_groups
from pmlgamm.data import read_csv, write_csv


def test_from_arrays_groups_and_sizes():
    data = from_arrays([1.0, 2.0, 3.0, 4.0], [0.1, 0.2, 0.3, 0.4],
                       [2, 1, 2, 1])
    assert data.m == 2
    assert list(data.group_ids) == [1, 2]
    assert list(data.group_sizes) == [2, 2]
    assert data.n == 4 and data.p == 1


def test_row_order_canonicalized():
    y = [3.0, 1.0, 2.0]
    x = [0.3, 0.1, 0.2]
    a = from_arrays(y, x, [1, 1, 1])
    b = from_arrays(y[::-1], x[::-1], [1, 1, 1])
    assert np.array_equal(a.y, b.y)
    assert np.array_equal(a.X, b.X)


def test_duplicate_group_ids_rejected():
    with pytest.raises(DomainError):
        from_groups([(1, [1.0], [[0.5]]), (1, [2.0], [[0.1]])])


def test_empty_group_rejected():
    with pytest.raises(DomainError):
        from_groups([(1, [], [])])


def test_inconsistent_dimensions_rejected():
    with pytest.raises(DomainError):
        from_arrays([1.0, 2.0], [[0.1, 0.2]], [1, 1])


def test_csv_round_trip(tmp_path):
    rng = np.random.default_rng(5)
    y = rng.poisson(2.0, size=12).astype(float)
    X = rng.uniform(size=(12, 2))
    groups = rng.integers(1, 4, size=12)
    data = from_arrays(y, X, groups)
    path = tmp_path / "data.csv"
    write_csv(data, path)
    back = read_csv(path)
    assert np.array_equal(back.y, data.y)
    assert np.array_equal(back.X, data.X)
    assert np.array_equal(back.group_ids, data.group_ids)


def test_csv_header_checked(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("id,y,x1\n1,2.0,0.5\n")
    with pytest.raises(DataFormatError, match="line 1"):
        read_csv(path)


def test_csv_bad_value_reports_line(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("group,y,x1\n1,2.0,0.5\n1,oops,0.7\n")
    with pytest.raises(DataFormatError, match="line 3"):
        read_csv(path)


def test_csv_wrong_field_count_reports_line(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("group,y,x1\n1,2.0\n")
    with pytest.raises(DataFormatError, match="line 2"):
        read_csv(path)


def test_csv_empty_file(tmp_path):
    path = tmp_path / "empty.csv"
    path.write_text("")
    with pytest.raises(DataFormatError):
        read_csv(path)


def test_group_rows_slicing():
    data = from_arrays([1.0, 2.0, 3.0], [0.1, 0.2, 0.3], [5, 5, 9])
    y0, x0 = data.group_rows(0)
    assert y0.shape == (2,) and x0.shape == (2, 1)
    y1, _ = data.group_rows(1)
    assert list(y1) == [3.0]
