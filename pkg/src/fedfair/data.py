"""Tabular data loading, encoding, shift splitting and client sharding.

The loader is schema generic: any CSV with one declared label column and
one declared sensitive column works. Categorical columns are one-hot
expanded, numeric columns are min-max scaled to [0, 1], and a constant
bias column is appended as the last feature.
"""

from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
import yaml

from fedfair.errors import ConfigError, RowParseError, SchemaError

log = logging.getLogger(__name__)

COLUMN_KINDS = ("numeric", "categorical", "label", "sensitive")

#: Cell values treated as missing; rows containing them are dropped at load.
MISSING_VALUES = ("", "?", "NA")


@dataclass(frozen=True)
class ColumnSpec:
    name: str
    kind: str
    split_key: bool = False


@dataclass(frozen=True)
class Schema:
    columns: tuple[ColumnSpec, ...]

    def __post_init__(self):
        kinds = [c.kind for c in self.columns]
        for k in kinds:
            if k not in COLUMN_KINDS:
                raise SchemaError(f"unknown column kind {k!r}")
        if kinds.count("label") != 1:
            raise SchemaError("schema must declare exactly one label column")
        if kinds.count("sensitive") != 1:
            raise SchemaError("schema must declare exactly one sensitive column")

    def column(self, name: str) -> ColumnSpec:
        for c in self.columns:
            if c.name == name:
                return c
        raise SchemaError(f"no column named {name!r}")

    @property
    def label_column(self) -> str:
        return next(c.name for c in self.columns if c.kind == "label")

    @property
    def sensitive_column(self) -> str:
        return next(c.name for c in self.columns if c.kind == "sensitive")


@dataclass
class RawTable:
    schema: Schema
    rows: list[dict]

    @property
    def n(self) -> int:
        return len(self.rows)

    def column_values(self, name: str) -> list:
        return [r[name] for r in self.rows]


@dataclass(frozen=True)
class ShiftSplitSpec:
    split_column: str
    split_predicate: frozenset
    train_fraction_group_a: float
    train_fraction_group_b: float
    client_assignment: str  # "by_group" | "even"
    num_clients: int
    seed: int

    def __post_init__(self):
        for f in (self.train_fraction_group_a, self.train_fraction_group_b):
            if not 0.0 <= f <= 1.0:
                raise ConfigError(f"train fraction {f} outside [0, 1]")
        if self.num_clients < 1:
            raise ConfigError("num_clients must be >= 1")
        if self.client_assignment not in ("by_group", "even"):
            raise ConfigError(
                f"unknown client_assignment {self.client_assignment!r}"
            )
        if self.client_assignment == "by_group" and self.num_clients != 2:
            raise ConfigError("by_group assignment requires exactly 2 clients")


@dataclass
class EncodedDataset:
    """Feature matrix with bias column last, plus binary label/sensitive."""

    features: np.ndarray  # (n, d+1), last column all ones
    labels: np.ndarray  # (n,) in {0, 1}
    sensitive: np.ndarray  # (n,) in {0, 1}
    feature_names: list[str]
    aux: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        """Feature dimension including the bias column."""
        return self.features.shape[1]

    def subset(self, idx: np.ndarray) -> "EncodedDataset":
        return EncodedDataset(
            features=self.features[idx],
            labels=self.labels[idx],
            sensitive=self.sensitive[idx],
            feature_names=self.feature_names,
            aux={k: v[idx] for k, v in self.aux.items()},
        )


@dataclass
class ClientShard:
    client_id: int
    features: np.ndarray
    labels: np.ndarray
    sensitive: np.ndarray

    @property
    def n(self) -> int:
        return self.features.shape[0]


def load_csv(path, schema: Schema) -> RawTable:
    """Parse a headered CSV against *schema*, dropping incomplete rows.

    Raises SchemaError if a declared column is absent from the header and
    RowParseError (with the 1-based line number) on unparsable numerics.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        positions = {}
        for col in schema.columns:
            if col.name not in header:
                raise SchemaError(f"{path}: missing column {col.name!r}")
            positions[col.name] = header.index(col.name)

        rows: list[dict] = []
        dropped = 0
        for lineno, raw in enumerate(reader, start=2):
            if not raw:
                continue
            values = {
                col.name: raw[positions[col.name]].strip()
                for col in schema.columns
            }
            if any(v in MISSING_VALUES for v in values.values()):
                dropped += 1
                continue
            row = {}
            for col in schema.columns:
                v = values[col.name]
                if col.kind == "numeric":
                    try:
                        row[col.name] = float(v)
                    except ValueError:
                        raise RowParseError(
                            lineno, f"column {col.name!r}: non-numeric {v!r}"
                        ) from None
                else:
                    row[col.name] = v
            rows.append(row)
    log.info("loaded %d rows from %s (%d dropped as incomplete)", len(rows), path, dropped)
    return RawTable(schema=schema, rows=rows)


class Encoder:
    """Fit one-hot / min-max statistics on one table, apply to any table.

    Numeric columns are scaled with the fitted min/max and clipped to
    [0, 1]; categories unseen at fit time map to an all-zero block with
    a warning. Label and sensitive values are binary-mapped with the
    majority value at fit time mapped to 1.
    """

    def __init__(self):
        self.fitted = False
        self.numeric_stats: dict[str, tuple[float, float]] = {}
        self.categories: dict[str, list] = {}
        self.binary_maps: dict[str, dict] = {}
        self.feature_names: list[str] = []

    def fit(self, raw: RawTable) -> "Encoder":
        self.schema = raw.schema
        self.feature_names = []
        for col in raw.schema.columns:
            vals = raw.column_values(col.name)
            if col.kind == "numeric":
                lo, hi = min(vals), max(vals)
                if lo == hi:
                    warnings.warn(
                        f"numeric column {col.name!r} is constant; scaled to 0.0"
                    )
                self.numeric_stats[col.name] = (lo, hi)
                self.feature_names.append(col.name)
            elif col.kind == "categorical":
                levels = sorted(set(vals))
                self.categories[col.name] = levels
                self.feature_names.extend(f"{col.name}={v}" for v in levels)
            else:  # label or sensitive: majority value -> 1
                counts: dict = {}
                for v in vals:
                    counts[v] = counts.get(v, 0) + 1
                # deterministic tie-break by value
                order = sorted(counts, key=lambda v: (counts[v], str(v)))
                mapping = {v: 0 for v in order[:-1]}
                mapping[order[-1]] = 1
                self.binary_maps[col.name] = mapping
        self.feature_names.append("__bias__")
        self.fitted = True
        return self

    def transform(self, raw: RawTable) -> EncodedDataset:
        if not self.fitted:
            raise ConfigError("Encoder.transform called before fit")
        n = raw.n
        blocks = []
        for col in raw.schema.columns:
            vals = raw.column_values(col.name)
            if col.kind == "numeric":
                lo, hi = self.numeric_stats[col.name]
                arr = np.asarray(vals, dtype=float)
                if hi == lo:
                    scaled = np.zeros(n)
                else:
                    scaled = np.clip((arr - lo) / (hi - lo), 0.0, 1.0)
                blocks.append(scaled[:, None])
            elif col.kind == "categorical":
                levels = self.categories[col.name]
                index = {v: j for j, v in enumerate(levels)}
                block = np.zeros((n, len(levels)))
                unseen = 0
                for i, v in enumerate(vals):
                    j = index.get(v)
                    if j is None:
                        unseen += 1
                    else:
                        block[i, j] = 1.0
                if unseen:
                    warnings.warn(
                        f"{unseen} unseen value(s) in column {col.name!r}; "
                        "encoded as all-zero block"
                    )
                blocks.append(block)
            elif col.kind == "sensitive":
                # the boundary distance is over non-sensitive attributes
                # only, so the sensitive column never enters the features
                pass
            else:  # label
                mapping = self.binary_maps[col.name]
                y = np.asarray([mapping.get(v, 0) for v in vals], dtype=int)
        blocks.append(np.ones((n, 1)))
        features = np.hstack(blocks)

        sens_col = raw.schema.sensitive_column
        mapping = self.binary_maps[sens_col]
        sensitive = np.asarray(
            [mapping.get(v, 0) for v in raw.column_values(sens_col)], dtype=int
        )
        aux = {
            col.name: np.asarray(raw.column_values(col.name), dtype=object)
            for col in raw.schema.columns
            if col.split_key
        }
        return EncodedDataset(
            features=features,
            labels=y,
            sensitive=sensitive,
            feature_names=list(self.feature_names),
            aux=aux,
        )


def encode(raw: RawTable) -> EncodedDataset:
    """Fit encoding statistics on *raw* and encode it in one step."""
    return Encoder().fit(raw).transform(raw)


def shift_split(
    data: EncodedDataset, spec: ShiftSplitSpec
) -> tuple[EncodedDataset, EncodedDataset, list[ClientShard]]:
    """Split into train/test with engineered distribution shift and shard.

    The training set keeps ``train_fraction_group_a`` of the rows whose
    split column matches the predicate (group A) and
    ``train_fraction_group_b`` of the rest; the test set is the
    complement. Deterministic given the spec seed.
    """
    if spec.split_column not in data.aux:
        raise ConfigError(
            f"split column {spec.split_column!r} not tracked; mark it split_key"
        )
    values = data.aux[spec.split_column]
    mask_a = np.asarray([v in spec.split_predicate for v in values], dtype=bool)
    idx_a = np.flatnonzero(mask_a)
    idx_b = np.flatnonzero(~mask_a)

    rng = np.random.default_rng(spec.seed)
    take_a = int(round(spec.train_fraction_group_a * idx_a.size))
    take_b = int(round(spec.train_fraction_group_b * idx_b.size))
    perm_a = rng.permutation(idx_a)
    perm_b = rng.permutation(idx_b)
    train_a = np.sort(perm_a[:take_a])
    train_b = np.sort(perm_b[:take_b])
    test_idx = np.sort(np.concatenate([perm_a[take_a:], perm_b[take_b:]]))

    if spec.client_assignment == "by_group":
        shard_indices = [train_a, train_b]
    else:
        pooled = rng.permutation(np.concatenate([train_a, train_b]))
        shard_indices = np.array_split(pooled, spec.num_clients)

    for k, idx in enumerate(shard_indices):
        if idx.size == 0:
            raise ConfigError(f"split spec yields an empty shard for client {k}")

    train_idx = np.sort(np.concatenate([train_a, train_b]))
    train = data.subset(train_idx)
    test = data.subset(test_idx)
    shards = [
        ClientShard(
            client_id=k,
            features=data.features[idx],
            labels=data.labels[idx],
            sensitive=data.sensitive[idx],
        )
        for k, idx in enumerate(shard_indices)
    ]
    return train, test, shards


def load_schema_file(path) -> tuple[Schema, ShiftSplitSpec | None]:
    """Read a YAML schema file declaring columns and an optional split spec."""
    with open(path, encoding="utf-8") as fh:
        doc = yaml.safe_load(fh)
    if not isinstance(doc, dict) or "columns" not in doc:
        raise SchemaError(f"{path}: expected a mapping with a 'columns' list")
    columns = tuple(
        ColumnSpec(
            name=c["name"],
            kind=c["kind"],
            split_key=bool(c.get("split_key", False)),
        )
        for c in doc["columns"]
    )
    schema = Schema(columns)
    split = None
    if "split" in doc:
        s = doc["split"]
        split = ShiftSplitSpec(
            split_column=s["split_column"],
            split_predicate=frozenset(s["group_a_values"]),
            train_fraction_group_a=float(s["train_fraction_group_a"]),
            train_fraction_group_b=float(s["train_fraction_group_b"]),
            client_assignment=s.get("client_assignment", "by_group"),
            num_clients=int(s.get("num_clients", 2)),
            seed=int(s.get("seed", 0)),
        )
    return schema, split


def save_encoded_csv(path, ds: EncodedDataset) -> None:
    """Persist an encoded dataset (features + label + sensitive) as CSV."""
    header = ds.feature_names + ["__label__", "__sensitive__"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i in range(ds.n):
            w.writerow(
                [f"{v:.10g}" for v in ds.features[i]]
                + [int(ds.labels[i]), int(ds.sensitive[i])]
            )
