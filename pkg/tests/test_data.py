import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from survcontrast import ClassKind, Dataset, TestConfig, ValidationError, load_csv, save_csv, validate


def _write(path, text):
    path.write_text(text)
    return path


def test_load_three_rows(tmp_path):
    p = _write(tmp_path / "d.csv", "w1,w2,a,y,delta\n1,0,0.1,3,1\n2,1,-0.5,4,0\n1.5,0,0.7,2.5,1\n")
    ds = load_csv(p)
    assert ds.n == 3 and ds.d == 2
    np.testing.assert_array_equal(ds.A, [0.1, -0.5, 0.7])
    np.testing.assert_array_equal(ds.delta, [1, 0, 1])


def test_column_order_is_free(tmp_path):
    p = _write(tmp_path / "d.csv", "delta,a,w1,y\n1,0.1,3,2\n0,0.2,4,5\n")
    ds = load_csv(p)
    np.testing.assert_array_equal(ds.W[:, 0], [3, 4])
    np.testing.assert_array_equal(ds.Y, [2, 5])


def test_bad_delta_names_row(tmp_path):
    rows = "".join(f"1,0.{i},3,1\n" for i in range(1, 5)) + "1,0.9,3,2\n"
    p = _write(tmp_path / "d.csv", "w1,a,y,delta\n" + rows)
    with pytest.raises(ValidationError, match="row 5"):
        load_csv(p)


def test_all_problems_are_reported(tmp_path):
    p = _write(tmp_path / "d.csv", "w1,a,y,delta\n1,0.1,-3,1\n1,0.2,3,7\n1,x,3,1\n")
    with pytest.raises(ValidationError) as err:
        load_csv(p)
    assert len(err.value.problems) == 3


def test_missing_column(tmp_path):
    p = _write(tmp_path / "d.csv", "w1,a,delta\n1,0.1,1\n")
    with pytest.raises(ValidationError, match="'y'"):
        load_csv(p)


def test_degenerate_exposure():
    with pytest.raises(ValidationError, match="degenerate exposure range"):
        Dataset(W=np.zeros((3, 1)), A=[0.5, 0.5, 0.5], Y=[1, 2, 3], delta=[1, 1, 0])


def test_dataset_is_read_only():
    ds = Dataset(W=np.zeros((2, 1)), A=[0, 1], Y=[1, 2], delta=[1, 0])
    with pytest.raises(ValueError):
        ds.A[0] = 3.0


def test_validate_t_beyond_follow_up():
    ds = Dataset(W=np.zeros((3, 0)), A=[0, 1, 2], Y=[1, 2, 3], delta=[1, 1, 1])
    with pytest.raises(ValidationError, match="beyond follow-up"):
        validate(ds, TestConfig(t=3.0))
    assert validate(ds, TestConfig(t=1.5)) == []


def test_validate_warns_without_events_before_t():
    ds = Dataset(W=np.zeros((3, 0)), A=[0, 1, 2], Y=[5, 6, 7], delta=[1, 0, 1])
    assert validate(ds, TestConfig(t=2.0)) == ["no events before t; statistic degenerate"]


def test_validate_is_pure(small_data):
    before = [arr.copy() for arr in (small_data.W, small_data.A, small_data.Y, small_data.delta)]
    validate(small_data, TestConfig(t=5.0))
    for old, new in zip(before, (small_data.W, small_data.A, small_data.Y, small_data.delta)):
        np.testing.assert_array_equal(old, new)


@pytest.mark.parametrize("bad", [dict(kappa=1), dict(lam=0), dict(alpha=1.0), dict(t=-1),
                                 dict(num_null_draws=0), dict(density_floor=0),
                                 dict(monotone_method="newton")])
def test_config_rejects(bad):
    with pytest.raises(ValidationError):
        TestConfig(**bad)


def test_class_kind_aliases():
    assert ClassKind.parse("Box_TV") is ClassKind.BOX_TV
    assert ClassKind.parse("monotone-variance") is ClassKind.MONOTONE_VARIANCE
    with pytest.raises(ValueError):
        ClassKind.parse("sobolev")


def test_config_inf_lambda_serialises():
    assert TestConfig(lam=math.inf).to_dict()["lambda"] == "inf"


finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(finite, finite, st.floats(0, 1e6), st.integers(0, 1)),
                min_size=2, max_size=15))
def test_csv_round_trip_is_exact(tmp_path_factory, rows):
    A = [r[1] for r in rows]
    if min(A) == max(A):
        A[0] = A[0] + 1.0
    ds = Dataset(W=np.array([[r[0]] for r in rows]), A=A, Y=[r[2] for r in rows],
                 delta=[r[3] for r in rows])
    path = tmp_path_factory.mktemp("rt") / "d.csv"
    save_csv(ds, path)
    back = load_csv(path)
    for name in ("W", "A", "Y", "delta"):
        np.testing.assert_array_equal(getattr(ds, name), getattr(back, name))


def test_take_duplicates_rows(small_data):
    twice = small_data.take(np.repeat(np.arange(small_data.n), 2))
    assert twice.n == 2 * small_data.n
    np.testing.assert_array_equal(twice.A[::2], small_data.A)
