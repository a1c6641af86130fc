import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedfair import data
from fedfair.errors import ConfigError, RowParseError, SchemaError

SCHEMA = data.Schema(
    (
        data.ColumnSpec("age", "numeric"),
        data.ColumnSpec("job", "categorical", split_key=True),
        data.ColumnSpec("gender", "sensitive"),
        data.ColumnSpec("income", "label"),
    )
)


def make_table(rows):
    return data.RawTable(schema=SCHEMA, rows=rows)


def row(age, job, gender, income):
    return {"age": age, "job": job, "gender": gender, "income": income}


# ---------------------------------------------------------------------------
# schema validation
# ---------------------------------------------------------------------------


def test_schema_requires_exactly_one_label():
    with pytest.raises(SchemaError):
        data.Schema((data.ColumnSpec("a", "numeric"), data.ColumnSpec("s", "sensitive")))


def test_schema_requires_exactly_one_sensitive():
    with pytest.raises(SchemaError):
        data.Schema((data.ColumnSpec("a", "numeric"), data.ColumnSpec("y", "label")))


def test_schema_rejects_unknown_kind():
    with pytest.raises(SchemaError):
        data.Schema(
            (
                data.ColumnSpec("a", "weird"),
                data.ColumnSpec("y", "label"),
                data.ColumnSpec("s", "sensitive"),
            )
        )


# ---------------------------------------------------------------------------
# load_csv
# ---------------------------------------------------------------------------


def write_csv(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def test_load_csv_basic(tmp_path):
    p = write_csv(
        tmp_path / "d.csv",
        "age,job,gender,income\n30,clerk,male,high\n40,cook,female,low\n",
    )
    table = data.load_csv(p, SCHEMA)
    assert table.n == 2
    assert table.rows[0]["age"] == 30.0


def test_load_csv_drops_incomplete_rows(tmp_path):
    p = write_csv(
        tmp_path / "d.csv",
        "age,job,gender,income\n30,clerk,male,high\n?,cook,female,low\n",
    )
    assert data.load_csv(p, SCHEMA).n == 1


def test_load_csv_missing_column(tmp_path):
    p = write_csv(tmp_path / "d.csv", "age,gender,income\n30,male,high\n")
    with pytest.raises(SchemaError):
        data.load_csv(p, SCHEMA)


def test_load_csv_bad_numeric_cites_line(tmp_path):
    p = write_csv(
        tmp_path / "d.csv",
        "age,job,gender,income\n30,clerk,male,high\nabc,cook,female,low\n",
    )
    with pytest.raises(RowParseError) as err:
        data.load_csv(p, SCHEMA)
    assert err.value.line_number == 3


def test_load_csv_empty_file(tmp_path):
    p = write_csv(tmp_path / "d.csv", "")
    with pytest.raises(SchemaError):
        data.load_csv(p, SCHEMA)


# ---------------------------------------------------------------------------
# encode
# ---------------------------------------------------------------------------


def test_encode_minmax_identity():
    table = make_table(
        [
            row(10, "a", "male", "high"),
            row(20, "a", "male", "high"),
            row(30, "a", "female", "low"),
        ]
    )
    ds = data.encode(table)
    age = ds.features[:, ds.feature_names.index("age")]
    assert np.allclose(age, [0.0, 0.5, 1.0])


def test_encode_one_hot_rows_sum_to_one():
    table = make_table(
        [
            row(1, "a", "male", "high"),
            row(2, "b", "female", "low"),
            row(3, "c", "male", "high"),
        ]
    )
    ds = data.encode(table)
    block = ds.features[:, [ds.feature_names.index(f"job={v}") for v in "abc"]]
    assert np.allclose(block.sum(axis=1), 1.0)
    # round-trip: one-hot block recovers the original category
    levels = ["a", "b", "c"]
    decoded = [levels[j] for j in block.argmax(axis=1)]
    assert decoded == [r["job"] for r in table.rows]


def test_encode_bias_column_last_and_all_ones():
    table = make_table([row(1, "a", "male", "high"), row(2, "a", "female", "low")])
    ds = data.encode(table)
    assert ds.feature_names[-1] == "__bias__"
    assert np.all(ds.features[:, -1] == 1.0)


def test_encode_excludes_sensitive_from_features():
    table = make_table([row(1, "a", "male", "high"), row(2, "a", "female", "low")])
    ds = data.encode(table)
    assert not any("gender" in name for name in ds.feature_names)
    assert set(ds.sensitive.tolist()) == {0, 1}


def test_encode_majority_value_maps_to_one():
    table = make_table(
        [
            row(1, "a", "male", "high"),
            row(2, "a", "male", "high"),
            row(3, "a", "female", "low"),
        ]
    )
    ds = data.encode(table)
    assert ds.labels.tolist() == [1, 1, 0]
    assert ds.sensitive.tolist() == [1, 1, 0]


def test_encode_constant_numeric_warns_and_zeroes():
    table = make_table([row(5, "a", "male", "high"), row(5, "a", "female", "low")])
    with pytest.warns(UserWarning):
        ds = data.encode(table)
    assert np.all(ds.features[:, ds.feature_names.index("age")] == 0.0)


def test_transform_unseen_category_warns_all_zero():
    fit_table = make_table([row(1, "a", "male", "high"), row(2, "b", "female", "low")])
    enc = data.Encoder().fit(fit_table)
    new = make_table([row(1, "zz", "male", "high")])
    with pytest.warns(UserWarning):
        ds = enc.transform(new)
    cols = [enc.feature_names.index("job=a"), enc.feature_names.index("job=b")]
    assert np.all(ds.features[:, cols] == 0.0)


def test_transform_clips_test_values_to_unit_interval():
    fit_table = make_table([row(0, "a", "male", "high"), row(10, "a", "female", "low")])
    enc = data.Encoder().fit(fit_table)
    ds = enc.transform(make_table([row(-5, "a", "male", "high"), row(20, "a", "female", "low")]))
    age = ds.features[:, enc.feature_names.index("age")]
    assert np.allclose(age, [0.0, 1.0])


def test_transform_before_fit_raises():
    with pytest.raises(ConfigError):
        data.Encoder().transform(make_table([row(1, "a", "male", "high")]))


# ---------------------------------------------------------------------------
# shift_split
# ---------------------------------------------------------------------------


def make_split_table(n_a=10, n_b=10):
    rows = []
    for i in range(n_a):
        rows.append(row(i, "private", "male" if i % 2 else "female", "high" if i % 3 else "low"))
    for i in range(n_b):
        rows.append(row(100 + i, "other", "male" if i % 2 else "female", "low" if i % 3 else "high"))
    return make_table(rows)


def spec(fa=0.8, fb=0.2, assignment="by_group", clients=2, seed=0):
    return data.ShiftSplitSpec(
        split_column="job",
        split_predicate=frozenset({"private"}),
        train_fraction_group_a=fa,
        train_fraction_group_b=fb,
        client_assignment=assignment,
        num_clients=clients,
        seed=seed,
    )


def test_shift_split_counts_by_group():
    ds = data.encode(make_split_table())
    train, test, shards = data.shift_split(ds, spec())
    assert shards[0].n == 8 and shards[1].n == 2
    assert train.n == 10 and test.n == 10


def test_shift_split_partition_no_overlap():
    ds = data.encode(make_split_table())
    # tag rows by the unique age value to track identity through the split
    age_col = ds.feature_names.index("age")
    train, test, shards = data.shift_split(ds, spec())
    train_ids = set(train.features[:, age_col].tolist())
    test_ids = set(test.features[:, age_col].tolist())
    assert not train_ids & test_ids
    shard_ids = [set(s.features[:, age_col].tolist()) for s in shards]
    assert shard_ids[0] | shard_ids[1] == train_ids
    assert not shard_ids[0] & shard_ids[1]


def test_shift_split_even_sizes_near_equal():
    ds = data.encode(make_split_table())
    _, _, shards = data.shift_split(ds, spec(fa=0.8, fb=0.8, assignment="even"))
    assert abs(shards[0].n - shards[1].n) <= 1


def test_shift_split_deterministic():
    ds = data.encode(make_split_table())
    a = data.shift_split(ds, spec(seed=3))
    b = data.shift_split(ds, spec(seed=3))
    assert np.array_equal(a[0].features, b[0].features)
    assert np.array_equal(a[1].features, b[1].features)
    for sa, sb in zip(a[2], b[2]):
        assert np.array_equal(sa.features, sb.features)


def test_shift_split_empty_shard_errors():
    ds = data.encode(make_split_table())
    with pytest.raises(ConfigError):
        data.shift_split(ds, spec(fb=0.0))


def test_shift_split_missing_split_key_errors():
    table = make_table([row(1, "a", "male", "high"), row(2, "a", "female", "low")])
    schema_no_key = data.Schema(
        tuple(
            data.ColumnSpec(c.name, c.kind, split_key=False) for c in SCHEMA.columns
        )
    )
    ds = data.encode(data.RawTable(schema=schema_no_key, rows=table.rows))
    with pytest.raises(ConfigError):
        data.shift_split(ds, spec())


def test_split_spec_validation():
    with pytest.raises(ConfigError):
        spec(fa=1.5)
    with pytest.raises(ConfigError):
        spec(assignment="weird")
    with pytest.raises(ConfigError):
        spec(assignment="by_group", clients=3)


@settings(max_examples=25, deadline=None)
@given(
    fa=st.floats(0.1, 0.9),
    fb=st.floats(0.1, 0.9),
    seed=st.integers(0, 1000),
)
def test_shift_split_partition_property(fa, fb, seed):
    ds = data.encode(make_split_table(12, 8))
    train, test, shards = data.shift_split(
        ds, spec(fa=fa, fb=fb, assignment="even", clients=2, seed=seed)
    )
    assert train.n + test.n == ds.n
    assert sum(s.n for s in shards) == train.n


# ---------------------------------------------------------------------------
# schema file loading
# ---------------------------------------------------------------------------


def test_load_schema_file(tmp_path):
    p = tmp_path / "schema.yaml"
    p.write_text(
        """
columns:
  - {name: age, kind: numeric}
  - {name: job, kind: categorical, split_key: true}
  - {name: gender, kind: sensitive}
  - {name: income, kind: label}
split:
  split_column: job
  group_a_values: [private]
  train_fraction_group_a: 0.8
  train_fraction_group_b: 0.2
""",
        encoding="utf-8",
    )
    schema, split = data.load_schema_file(p)
    assert schema.label_column == "income"
    assert split.split_predicate == frozenset({"private"})
    assert split.client_assignment == "by_group"


def test_load_schema_file_rejects_garbage(tmp_path):
    p = tmp_path / "schema.yaml"
    p.write_text("- just\n- a list\n", encoding="utf-8")
    with pytest.raises(SchemaError):
        data.load_schema_file(p)
