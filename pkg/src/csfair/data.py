"""Tabular ingestion, preprocessing, splitting, batching, synthetic data.

Preprocessing fits one-hot categories and z-score statistics on the
training split only; the same fitted stats are then applied to the test
split so no test information leaks into normalization.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError

STD_FLOOR = 1e-8


@dataclass
class Schema:
    label_column: str
    positive_label_value: str
    sensitive_columns: list[str]
    sensitive_value_maps: dict[str, dict[str, int]]
    numeric_columns: list[str]
    categorical_columns: list[str] = field(default_factory=list)

    def __post_init__(self):
        used = [self.label_column] + self.sensitive_columns
        features = self.numeric_columns + self.categorical_columns
        if set(used) & set(features):
            raise InvalidArgumentError(
                "label/sensitive columns must be disjoint from features"
            )

    @classmethod
    def from_json(cls, path: str) -> "Schema":
        with open(path) as fh:
            raw = json.load(fh)
        return cls(
            label_column=raw["label_column"],
            positive_label_value=str(raw["positive_label_value"]),
            sensitive_columns=list(raw["sensitive_columns"]),
            sensitive_value_maps={
                c: {str(k): int(v) for k, v in m.items()}
                for c, m in raw["sensitive_value_maps"].items()
            },
            numeric_columns=list(raw.get("numeric_columns", [])),
            categorical_columns=list(raw.get("categorical_columns", [])),
        )

    def to_json(self, path: str):
        with open(path, "w") as fh:
            json.dump(
                {
                    "label_column": self.label_column,
                    "positive_label_value": self.positive_label_value,
                    "sensitive_columns": self.sensitive_columns,
                    "sensitive_value_maps": self.sensitive_value_maps,
                    "numeric_columns": self.numeric_columns,
                    "categorical_columns": self.categorical_columns,
                },
                fh,
                indent=2,
            )
            fh.write("\n")


@dataclass
class RawTable:
    columns: dict[str, list[str]]
    n_rows: int
    dropped_rows: int

    def subset(self, idx: np.ndarray) -> "RawTable":
        cols = {c: [v[i] for i in idx] for c, v in self.columns.items()}
        return RawTable(cols, len(idx), 0)


@dataclass
class FitStats:
    numeric_mean: dict[str, float]
    numeric_std: dict[str, float]
    categories: dict[str, list[str]]  # first-appearance order on the fit split


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray
    S: np.ndarray  # (N, K) integer sensitive columns
    feature_names: list[str]
    fit_stats: FitStats | None = None

    @property
    def n(self) -> int:
        return self.X.shape[0]

    def subset(self, idx: np.ndarray) -> "Dataset":
        return Dataset(
            self.X[idx], self.y[idx], self.S[idx], self.feature_names, self.fit_stats
        )

    def save(self, path: str):
        np.savez(
            path,
            X=self.X,
            y=self.y,
            S=self.S,
            feature_names=np.array(self.feature_names, dtype=object),
        )

    @classmethod
    def load(cls, path: str) -> "Dataset":
        with np.load(path, allow_pickle=True) as data:
            return cls(
                X=data["X"],
                y=data["y"],
                S=data["S"],
                feature_names=list(data["feature_names"]),
            )


def load_csv(path: str, schema: Schema) -> RawTable:
    """Parse a CSV file, dropping (and counting) rows with missing or
    unmappable values in any used column."""
    used = (
        [schema.label_column]
        + schema.sensitive_columns
        + schema.numeric_columns
        + schema.categorical_columns
    )
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing_cols = [c for c in used if c not in header]
        if missing_cols:
            raise InvalidArgumentError(f"missing columns: {missing_cols}")
        columns: dict[str, list[str]] = {c: [] for c in used}
        kept = dropped = 0
        for lineno, row in enumerate(reader, start=2):
            values = {c: (row[c] or "").strip() for c in used}
            if any(v == "" for v in values.values()):
                dropped += 1
                continue
            ok = True
            for c in schema.numeric_columns:
                try:
                    float(values[c])
                except ValueError as exc:
                    raise InvalidArgumentError(
                        f"line {lineno}: non-numeric value {values[c]!r} in {c}"
                    ) from exc
            for c in schema.sensitive_columns:
                if values[c] not in schema.sensitive_value_maps[c]:
                    ok = False
            if not ok:
                dropped += 1
                continue
            for c in used:
                columns[c].append(values[c])
            kept += 1
    return RawTable(columns, kept, dropped)


def preprocess(
    raw: RawTable,
    schema: Schema,
    fit_stats: FitStats | None = None,
    include_sensitive: bool = False,
) -> Dataset:
    """One-hot categoricals, z-score numerics, map labels and groups.

    When ``fit_stats`` is None the statistics are fitted on this table;
    otherwise the given (train-split) stats are applied unchanged.
    Unseen test-split categories encode as an all-zero block.  Sensitive
    columns are excluded from X unless ``include_sensitive`` is set.
    """
    n = raw.n_rows
    if fit_stats is None:
        numeric_mean, numeric_std, categories = {}, {}, {}
        for c in schema.numeric_columns:
            vals = np.array([float(v) for v in raw.columns[c]])
            numeric_mean[c] = float(vals.mean()) if n else 0.0
            numeric_std[c] = max(float(vals.std()), STD_FLOOR) if n else 1.0
        for c in schema.categorical_columns:
            seen: list[str] = []
            for v in raw.columns[c]:
                if v not in seen:
                    seen.append(v)
            categories[c] = seen
        fit_stats = FitStats(numeric_mean, numeric_std, categories)

    blocks, names = [], []
    for c in schema.numeric_columns:
        vals = np.array([float(v) for v in raw.columns[c]])
        blocks.append((vals - fit_stats.numeric_mean[c]) / fit_stats.numeric_std[c])
        names.append(c)
    for c in schema.categorical_columns:
        cats = fit_stats.categories[c]
        block = np.zeros((n, len(cats)))
        index = {v: k for k, v in enumerate(cats)}
        for i, v in enumerate(raw.columns[c]):
            if v in index:
                block[i, index[v]] = 1.0
        blocks.append(block)
        names.extend(f"{c}={v}" for v in cats)
    X = (
        np.column_stack(blocks)
        if blocks
        else np.zeros((n, 0))
    )
    y = np.array(
        [1 if v == schema.positive_label_value else 0 for v in raw.columns[schema.label_column]],
        dtype=int,
    )
    S = np.column_stack(
        [
            np.array([schema.sensitive_value_maps[c][v] for v in raw.columns[c]], dtype=int)
            for c in schema.sensitive_columns
        ]
    )
    if include_sensitive:
        X = np.column_stack([X, S.astype(float)]) if X.size else S.astype(float)
        names = names + list(schema.sensitive_columns)
    return Dataset(X, y, S, names, fit_stats)


def stratified_rows(
    y: np.ndarray, test_fraction: float, seed: int
) -> tuple[np.ndarray, np.ndarray]:
    """Label-stratified (train, test) index arrays, deterministic per seed."""
    y = np.asarray(y).ravel()
    if not 0.0 < test_fraction < 1.0:
        raise InvalidArgumentError("test_fraction must be in (0, 1)")
    if y.size < 2:
        raise InvalidArgumentError("need at least 2 samples to split")
    rng = np.random.default_rng(seed)
    test_idx: list[np.ndarray] = []
    for label in np.unique(y):
        idx = np.flatnonzero(y == label)
        if idx.size < 2:
            raise InvalidArgumentError(
                f"label class {label} has fewer than 2 samples; cannot stratify"
            )
        perm = rng.permutation(idx)
        n_test = int(round(idx.size * test_fraction))
        n_test = min(max(n_test, 1), idx.size - 1)
        test_idx.append(perm[:n_test])
    test = np.sort(np.concatenate(test_idx))
    train = np.setdiff1d(np.arange(y.size), test)
    return train, test


def split(dataset: Dataset, test_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Label-stratified random split of an in-memory dataset."""
    train, test = stratified_rows(dataset.y, test_fraction, seed)
    return dataset.subset(train), dataset.subset(test)


def prepare_splits(
    raw: RawTable,
    schema: Schema,
    test_fraction: float,
    seed: int,
    include_sensitive: bool = False,
) -> tuple[Dataset, Dataset]:
    """Split raw rows, then fit preprocessing on the train split only."""
    y = np.array(
        [1 if v == schema.positive_label_value else 0 for v in raw.columns[schema.label_column]]
    )
    train_rows, test_rows = stratified_rows(y, test_fraction, seed)
    train_ds = preprocess(raw.subset(train_rows), schema, include_sensitive=include_sensitive)
    test_ds = preprocess(
        raw.subset(test_rows), schema, train_ds.fit_stats, include_sensitive=include_sensitive
    )
    return train_ds, test_ds


def batches(n: int, batch_size: int, seed: int, epoch: int) -> list[np.ndarray]:
    """Seeded per-epoch permutation chunked into batches; partial tail kept."""
    if batch_size < 1:
        raise InvalidArgumentError("batch_size must be >= 1")
    rng = np.random.default_rng((seed, epoch))
    perm = rng.permutation(n)
    return [perm[i : i + batch_size] for i in range(0, n, batch_size)]


# Synthetic biased-data construction (frozen; documented in the README):
# feature 0 carries the dominant label signal plus a group shift,
#     x0 ~ N(1.4*(2y-1) + 1.25*bias*(2s-1), 1);
# features 1 and 2 carry weaker clean label signal, x ~ N(0.4*(2y-1), 1);
# remaining features are N(0, 1) noise.  At bias=0 the groups are
# exchangeable; at bias=1 group membership strongly shifts the most
# label-predictive direction, so an unregularized classifier leans on
# feature 0 and inherits a large demographic-parity gap, while a fairer
# classifier can shift weight onto features 1-2 at an accuracy cost.
LABEL_SIGNAL_MAIN = 1.4
LABEL_SIGNAL_AUX = 0.4
GROUP_SHIFT_SCALE = 1.25


def gen_synthetic(n_per_group_label: int, bias: float, d: int, seed: int) -> Dataset:
    """Two-group synthetic dataset with a tunable group-dependent bias."""
    if n_per_group_label < 1:
        raise InvalidArgumentError("n_per_group_label must be >= 1")
    if d < 2:
        raise InvalidArgumentError("d must be >= 2")
    if not 0.0 <= bias <= 1.0:
        raise InvalidArgumentError("bias must be in [0, 1]")
    rng = np.random.default_rng(seed)
    X_parts, y_parts, s_parts = [], [], []
    for s in (0, 1):
        for y in (0, 1):
            m = np.zeros(d)
            m[0] = LABEL_SIGNAL_MAIN * (2 * y - 1) + GROUP_SHIFT_SCALE * bias * (2 * s - 1)
            for j in (1, 2):
                if j < d:
                    m[j] = LABEL_SIGNAL_AUX * (2 * y - 1)
            X_parts.append(rng.standard_normal((n_per_group_label, d)) + m)
            y_parts.append(np.full(n_per_group_label, y, dtype=int))
            s_parts.append(np.full(n_per_group_label, s, dtype=int))
    X = np.vstack(X_parts)
    y = np.concatenate(y_parts)
    S = np.concatenate(s_parts)[:, None]
    names = [f"f{j}" for j in range(d)]
    return Dataset(X, y, S, names)


def synthetic_schema(d: int) -> Schema:
    """Schema matching the CSV emitted by the gen-synth CLI command."""
    return Schema(
        label_column="label",
        positive_label_value="1",
        sensitive_columns=["group"],
        sensitive_value_maps={"group": {"0": 0, "1": 1}},
        numeric_columns=[f"f{j}" for j in range(d)],
    )


def write_dataset_csv(dataset: Dataset, path: str):
    """Write a dataset as a CSV consumable by load_csv + synthetic_schema."""
    d = dataset.X.shape[1]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"f{j}" for j in range(d)] + ["group", "label"])
        for i in range(dataset.n):
            row = [repr(float(v)) for v in dataset.X[i]]
            row.append(str(int(dataset.S[i, 0])))
            row.append(str(int(dataset.y[i])))
            writer.writerow(row)
