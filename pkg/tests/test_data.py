import numpy as np
import pytest

from hybridqe.data import (
    DISTANCE_CALLS,
    FLOAT64,
    INT64,
    TEXT,
    Metric,
    Schema,
    Table,
    as_vector,
    compare_values,
    distance,
    distance_batch,
    empty_columns,
    load_table,
    quantile,
    read_vectors_binary,
    vector_type,
    write_table,
    write_vectors_binary,
)
from hybridqe.errors import (
    DimensionError,
    EmptyInputError,
    ParseError,
    TypeMismatchError,
)


def test_l2_pythagorean():
    assert distance(Metric.L2, as_vector([0, 0]), as_vector([3, 4])) == 5.0


def test_inner_product_orthogonal():
    assert distance(Metric.INNER_PRODUCT, as_vector([1, 0]), as_vector([0, 1])) == 0.0


def test_inner_product_matches_scalar_loop_oracle():
    rng = np.random.default_rng(7)
    a = rng.standard_normal(16).astype(np.float32)
    b = rng.standard_normal(16).astype(np.float32)
    # independent oracle: explicit scalar accumulation
    acc = 0.0
    for x, y in zip(a.tolist(), b.tolist()):
        acc += x * y
    assert distance(Metric.INNER_PRODUCT, a, b) == pytest.approx(-acc, abs=1e-6)


def test_distance_dimension_mismatch():
    with pytest.raises(DimensionError):
        distance(Metric.L2, as_vector([1, 2]), as_vector([1, 2, 3]))


@pytest.mark.parametrize("metric", [Metric.L2, Metric.INNER_PRODUCT])
def test_distance_symmetry_and_self(metric):
    rng = np.random.default_rng(11)
    for _ in range(20):
        a = rng.standard_normal(8).astype(np.float32)
        b = rng.standard_normal(8).astype(np.float32)
        assert distance(metric, a, b) == distance(metric, b, a)
        if metric is Metric.L2:
            assert distance(metric, a, a) == 0.0


def test_inner_product_convention_argmin_is_argmax():
    rng = np.random.default_rng(3)
    q = rng.standard_normal(8).astype(np.float32)
    cands = rng.standard_normal((50, 8)).astype(np.float32)
    dists = [distance(Metric.INNER_PRODUCT, v, q) for v in cands]
    raw = [float(np.dot(v.astype(np.float64), q.astype(np.float64))) for v in cands]
    assert int(np.argmin(dists)) == int(np.argmax(raw))


def test_distance_batch_matches_single_and_counts():
    rng = np.random.default_rng(5)
    q = rng.standard_normal(12).astype(np.float32)
    mat = rng.standard_normal((30, 12)).astype(np.float32)
    DISTANCE_CALLS.reset()
    batch = distance_batch(Metric.L2, mat, q)
    assert DISTANCE_CALLS.value == 30
    singles = [distance(Metric.L2, row, q) for row in mat]
    assert DISTANCE_CALLS.value == 60
    np.testing.assert_allclose(batch, singles, rtol=1e-12)


def test_distance_increments_counter():
    DISTANCE_CALLS.reset()
    distance(Metric.L2, as_vector([0, 0]), as_vector([1, 1]))
    assert DISTANCE_CALLS.value == 1


# --- quantile -------------------------------------------------------------

def test_quantile_nearest_rank_midpoint():
    assert quantile(range(1, 101), 0.5) == 50


def test_quantile_q1_is_max():
    assert quantile([3.5, 9.0, 1.25], 1.0) == 9.0


def test_quantile_empty_raises():
    with pytest.raises(EmptyInputError):
        quantile([], 0.5)


def test_quantile_matches_sort_oracle():
    rng = np.random.default_rng(17)
    vals = rng.random(10_000)
    got = quantile(vals, 0.3)
    ordered = np.sort(vals)
    # within one rank of the full-sort oracle position
    idx = int(np.searchsorted(ordered, got))
    target = int(np.ceil(0.3 * len(vals))) - 1
    assert abs(idx - target) <= 1


def test_quantile_selectivity_property():
    rng = np.random.default_rng(23)
    n = 5000
    vals = rng.random(n)
    for s in (0.03, 0.3, 0.5, 0.9):
        thr = quantile(vals, s)
        frac = float(np.mean(vals < thr))
        assert abs(frac - s) <= 1.0 / n + 1e-12


# --- schema / table -------------------------------------------------------

def make_schema(dim=2):
    return Schema(
        (
            ("id", INT64),
            ("score", FLOAT64),
            ("label", TEXT),
            ("vec", vector_type(dim)),
        ),
        primary_key="id",
    )


def test_schema_rejects_duplicate_columns():
    with pytest.raises(ValueError):
        Schema((("id", INT64), ("id", FLOAT64)), primary_key="id")


def test_schema_rejects_two_vector_columns():
    with pytest.raises(ValueError):
        Schema(
            (("id", INT64), ("a", vector_type(2)), ("b", vector_type(2))),
            primary_key="id",
        )


def test_schema_primary_key_must_be_int64():
    with pytest.raises(ValueError):
        Schema((("id", FLOAT64),), primary_key="id")


def test_schema_header_round_trip():
    s = make_schema(dim=5)
    assert Schema.parse_header(s.header(), primary_key="id") == s


def test_table_rejects_duplicate_primary_key():
    s = Schema((("id", INT64),), primary_key="id")
    with pytest.raises(ValueError):
        Table(s, {"id": np.array([1, 1], dtype=np.int64)}, 2)


def test_load_empty_file_with_header(tmp_path):
    s = make_schema()
    p = tmp_path / "empty.tbl"
    p.write_text(s.header() + "\n")
    t = load_table(p, s)
    assert t.row_count == 0


def test_load_three_row_fixture_bit_equal(tmp_path):
    s = make_schema()
    p = tmp_path / "three.tbl"
    p.write_text(
        s.header() + "\n"
        "1,0.5,alpha,[1.0;2.0]\n"
        "2,-3.25,beta,[0.25;-0.5]\n"
        "3,7.0,gamma,[0.0;0.0]\n"
    )
    t = load_table(p, s)
    assert t.row_count == 3
    assert t.column("id").tolist() == [1, 2, 3]
    assert t.column("label") == ["alpha", "beta", "gamma"]
    expect = np.array([[1.0, 2.0], [0.25, -0.5], [0.0, 0.0]], dtype=np.float32)
    assert np.array_equal(t.vectors(), expect)


def test_write_then_load_round_trip(tmp_path):
    rng = np.random.default_rng(29)
    n, dim = 200, 4
    s = make_schema(dim)
    cols = empty_columns(s, n)
    cols["id"] = np.arange(n, dtype=np.int64)
    cols["score"] = rng.random(n)
    cols["label"] = [f"l{i % 7}" for i in range(n)]
    cols["vec"] = rng.standard_normal((n, dim)).astype(np.float32)
    t = Table(s, cols, n)
    p = tmp_path / "roundtrip.tbl"
    write_table(t, p)
    back = load_table(p, s)
    assert back.row_count == n
    assert np.array_equal(back.column("id"), t.column("id"))
    assert np.array_equal(back.column("score"), t.column("score"))
    assert back.column("label") == t.column("label")
    assert np.array_equal(back.vectors(), t.vectors())


def test_load_malformed_row_reports_index(tmp_path):
    s = make_schema()
    p = tmp_path / "bad.tbl"
    p.write_text(s.header() + "\n1,0.5,a,[1.0;2.0]\n2,oops,b,[1.0;2.0]\n")
    with pytest.raises(ParseError) as err:
        load_table(p, s)
    assert "row 1" in str(err.value)


def test_load_vector_dim_mismatch(tmp_path):
    s = make_schema(dim=2)
    p = tmp_path / "dim.tbl"
    p.write_text(s.header() + "\n1,0.5,a,[1.0;2.0;3.0]\n")
    with pytest.raises(DimensionError):
        load_table(p, s)


def test_binary_vector_round_trip(tmp_path):
    rng = np.random.default_rng(31)
    vecs = rng.standard_normal((17, 6)).astype(np.float32)
    p = tmp_path / "v.bin"
    write_vectors_binary(vecs, p)
    assert np.array_equal(read_vectors_binary(p), vecs)


# --- comparisons ----------------------------------------------------------

def test_compare_numeric_cross_kind_ok():
    assert compare_values("<", 1, 2.5)
    assert not compare_values("=", 2, 3.0)


def test_compare_type_mismatch_raises():
    with pytest.raises(TypeMismatchError):
        compare_values("<", "abc", 1)


def test_compare_null_is_false():
    assert not compare_values("=", None, None)
    assert not compare_values("<", None, 3)


def test_compare_text():
    assert compare_values(">", "2023-08-01", "2023-07-01")
    assert compare_values("<>", "US", "EU")
