import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hyperdisc.data import (
    DERIVED,
    RAW,
    DataError,
    Dataset,
    denormalize,
    derive_target,
    drop,
    load_csv,
    normalize,
    write_csv,
)


def _write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_load_small_file(tmp_path):
    ds = load_csv(_write(tmp_path, "a,b\n1,2\n3,4\n5,6\n"))
    assert ds.values.shape == (3, 2)
    assert ds.names == ("a", "b")
    assert ds.roles == (RAW, RAW)
    assert ds.normalization is None
    np.testing.assert_array_equal(ds.values, [[1, 2], [3, 4], [5, 6]])


def test_load_header_only(tmp_path):
    with pytest.raises(DataError, match="no data rows"):
        load_csv(_write(tmp_path, "a,b\n"))


def test_load_bad_cell_names_row_and_column(tmp_path):
    with pytest.raises(DataError, match=r"\(2, b\)"):
        load_csv(_write(tmp_path, "a,b\n1,2\n3,x\n"))


def test_load_errors(tmp_path):
    with pytest.raises(DataError, match="no such file"):
        load_csv(tmp_path / "missing.csv")
    with pytest.raises(DataError, match="row 2"):
        load_csv(_write(tmp_path, "a,b\n1,2\n3\n"))
    with pytest.raises(DataError, match="duplicate"):
        load_csv(_write(tmp_path, "a,a\n1,2\n"))


def test_custom_delimiter_and_roundtrip(tmp_path):
    ds = load_csv(_write(tmp_path, "a;b\n0.5;-1e-3\n2;3\n"), delimiter=";")
    out = tmp_path / "out.csv"
    write_csv(ds, out)
    back = load_csv(out)
    np.testing.assert_array_equal(back.values, ds.values)


def test_dataset_rejects_nonfinite_and_bad_roles():
    with pytest.raises(DataError, match="non-finite"):
        Dataset(np.array([[1.0, np.nan]]), ("a", "b"), (RAW, RAW))
    with pytest.raises(DataError, match="roles"):
        Dataset(np.zeros((2, 1)), ("a",), ("weird",))
    ds = Dataset(np.zeros((2, 1)), ("a",), (RAW,))
    with pytest.raises(ValueError):
        ds.values[0, 0] = 1.0


def test_normalize_two_points():
    ds = normalize(Dataset(np.array([[1.0], [3.0]]), ("a",), (RAW,)))
    np.testing.assert_allclose(ds.values[:, 0], [-1, 1], atol=1e-15)
    assert ds.normalization.shift[0] == pytest.approx(2.0)
    assert ds.normalization.scale[0] == pytest.approx(1.0)


def test_normalize_constant_column_passes_through():
    x = np.column_stack([[5.0, 5, 5], [1.0, 2, 3]])
    ds = normalize(Dataset(x, ("c", "v"), (RAW, RAW)))
    np.testing.assert_array_equal(ds.values[:, 0], [5, 5, 5])
    assert ds.constant_columns == frozenset({0})


def test_normalize_moments():
    x = np.random.default_rng(3).standard_normal((1000, 1)) * 7 + 11
    z = normalize(Dataset(x, ("a",), (RAW,))).values[:, 0]
    assert abs(z.mean()) < 1e-10
    assert abs(z.var() - 1) < 1e-8


def test_normalize_twice_is_an_error_but_effectively_idempotent():
    x = np.random.default_rng(0).standard_normal((50, 3))
    ds = normalize(Dataset(x, ("a", "b", "c"), (RAW,) * 3))
    with pytest.raises(DataError):
        normalize(ds)
    again = normalize(Dataset(ds.values, ds.names, ds.roles))
    assert np.max(np.abs(again.values - ds.values)) < 1e-10


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (12, 3), elements=st.floats(-1e3, 1e3)))
def test_denormalize_inverts_normalize(x):
    ds = Dataset(x, ("a", "b", "c"), (RAW,) * 3)
    norm = normalize(ds)
    back = denormalize(norm).values
    for j in range(3):
        if j in norm.constant_columns:
            np.testing.assert_array_equal(back[:, j], x[:, j])
        else:
            scale = max(np.max(np.abs(x[:, j])), 1e-300)
            assert np.max(np.abs(back[:, j] - x[:, j])) / scale < 1e-12


def test_derive_square_before_renormalization():
    src = np.array([-1.0, 0.0, 1.0])
    ds = Dataset(np.column_stack([src, [2.0, 0.0, 1.0]]), ("x1", "x2"), (RAW, RAW))
    # without normalization metadata the source is standardized, then squared
    d = derive_target(ds, "x1", "square")
    np.testing.assert_allclose(d.column("x1^2") * src.var(), [1, 0, 1])
    assert d.roles[-1] == DERIVED and d.derived_from == {"x1^2": "x1"}

    n = normalize(ds)
    v = n.column("x1")
    dn = derive_target(n, "x1", "square")
    col = dn.column("x1^2")
    np.testing.assert_allclose(col, (v**2 - (v**2).mean()) / (v**2).std())
    assert abs(col.mean()) < 1e-12 and abs(col.var() - 1) < 1e-12


def test_derive_identity_marks_redundant_pair():
    ds = normalize(Dataset(np.random.default_rng(1).standard_normal((20, 2)), ("a", "b"), (RAW, RAW)))
    d = derive_target(ds, "a", "identity")
    assert d.redundant_pairs == (("a", "a_id"),)
    assert d.derived_from == {"a_id": "a"}
    np.testing.assert_allclose(d.column("a_id"), d.column("a"), atol=1e-12)


def test_derive_errors():
    ds = Dataset(np.zeros((3, 1)) + np.arange(3)[:, None], ("a",), (RAW,))
    with pytest.raises(DataError, match="unknown column"):
        derive_target(ds, "zz", "square")
    d = derive_target(ds, "a", "square")
    with pytest.raises(DataError, match="already exists"):
        derive_target(d, "a", "square")


def test_derive_then_drop_restores():
    x = np.random.default_rng(2).standard_normal((30, 3))
    ds = normalize(Dataset(x, ("a", "b", "c"), (RAW,) * 3))
    back = drop(derive_target(ds, "b", "square"), "b^2")
    np.testing.assert_array_equal(back.values, ds.values)
    assert back.names == ds.names and back.roles == ds.roles
    np.testing.assert_array_equal(back.normalization.shift, ds.normalization.shift)
    np.testing.assert_array_equal(back.normalization.scale, ds.normalization.scale)
    assert back.derived_from == {}


def test_select_carries_normalization():
    x = np.column_stack([np.ones(4), np.arange(4.0), np.arange(4.0) ** 2])
    ds = normalize(Dataset(x, ("k", "a", "b"), (RAW,) * 3))
    sub = ds.select(["b", "k"])
    assert sub.constant_columns == frozenset({1})
    np.testing.assert_array_equal(sub.values[:, 0], ds.values[:, 2])
