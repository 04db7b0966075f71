"""Binary-feature datasets: CSV ingestion, hierarchy-consistency checks,
stratified folds and feature restriction."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Mapping, NamedTuple, Sequence, TextIO

import numpy as np
import pandas as pd
from logzero import logger

from .config import BINARY_VALUES, CLASS_COLUMN
from .errors import (
    ColumnCountError,
    ConfigError,
    EmptyDatasetError,
    FoldError,
    LabelCountError,
    NonBinaryValueError,
    SchemaError,
    UnknownFeatureError,
)
from .hierarchy import ClosureTable


class PairCounts(NamedTuple):
    sizes: np.ndarray
    ones: np.ndarray
    both: np.ndarray


@dataclass(frozen=True)
class Instance:
    values: Mapping[str, int]
    label: str

    @property
    def features(self) -> tuple[str, ...]:
        return tuple(self.values)

    def vector(self, features: Sequence[str]) -> np.ndarray:
        try:
            return np.fromiter((self.values[f] for f in features), dtype=np.int8, count=len(features))
        except KeyError as exc:
            raise UnknownFeatureError(exc.args[0]) from None


@dataclass(frozen=True, eq=False)
class Dataset:
    """A frame of 0/1 feature columns followed by the class column.

    `labels` is the label set of the dataset the frame was cut from, so a
    held-out fold that happens to contain one class still knows both.
    """

    frame: pd.DataFrame
    labels: tuple[str, ...]
    name: str = ""

    @cached_property
    def features(self) -> tuple[str, ...]:
        return tuple(c for c in self.frame.columns if c != CLASS_COLUMN)

    @cached_property
    def matrix(self) -> np.ndarray:
        values = self.frame[list(self.features)].to_numpy(dtype=np.int8)
        values.setflags(write=False)
        return values

    @cached_property
    def label_array(self) -> np.ndarray:
        return self.frame[CLASS_COLUMN].to_numpy(dtype=object)

    @cached_property
    def pair_counts(self) -> "PairCounts":
        """Per-label instance counts, per-feature ones and pairwise co-ones."""
        sizes, ones, both = [], [], []
        values = self.matrix.astype(np.int64)
        for label in self.labels:
            rows = values[self.label_array == label]
            sizes.append(len(rows))
            ones.append(rows.sum(axis=0))
            both.append(rows.T @ rows)
        p = len(self.features)
        return PairCounts(
            sizes=np.asarray(sizes, dtype=np.int64),
            ones=np.asarray(ones, dtype=np.int64).reshape(len(self.labels), p),
            both=np.asarray(both, dtype=np.int64).reshape(len(self.labels), p, p),
        )

    @property
    def instances(self) -> list[Instance]:
        return [self.instance(i) for i in range(len(self))]

    def instance(self, i: int) -> Instance:
        row = self.matrix[i]
        values = {feature: int(v) for feature, v in zip(self.features, row)}
        return Instance(values=values, label=str(self.label_array[i]))

    def subset(self, indices: Iterable[int]) -> "Dataset":
        frame = self.frame.iloc[list(indices)].reset_index(drop=True)
        return Dataset(frame=frame, labels=self.labels, name=self.name)

    def __len__(self) -> int:
        return len(self.frame)


class Violation(NamedTuple):
    instance: int
    feature: str
    ancestor: str


@dataclass(frozen=True)
class FoldAssignment:
    fold_of: tuple[int, ...]
    k: int
    seed: int

    def folds(self) -> list[list[int]]:
        members: list[list[int]] = [[] for _ in range(self.k)]
        for index, fold in enumerate(self.fold_of):
            members[fold].append(index)
        return members

    def to_json(self) -> str:
        return json.dumps({"seed": self.seed, "k": self.k, "fold_of": list(self.fold_of)})


def make_dataset(frame: pd.DataFrame, name: str = "") -> Dataset:
    labels = tuple(sorted(frame[CLASS_COLUMN].astype(str).unique()))
    frame = frame.astype({CLASS_COLUMN: str})
    return Dataset(frame=frame.reset_index(drop=True), labels=labels, name=name)


def load_dataset(source: TextIO, name: str = "") -> Dataset:
    """Read a CSV of 0/1 feature columns and a trailing `class` column.

    Row numbers in errors count the header as row 1. Blank lines are skipped
    but still counted.
    """
    try:
        raw = pd.read_csv(source, header=None, dtype=str, keep_default_na=False, skip_blank_lines=False)
    except pd.errors.EmptyDataError:
        raise EmptyDatasetError(1, "missing header") from None
    except pd.errors.ParserError as exc:
        found = re.search(r"line (\d+), saw (\d+)", str(exc))
        if found is None:
            raise ColumnCountError(1, str(exc).strip()) from None
        raise ColumnCountError(int(found.group(1)), f"too many columns ({found.group(2)})") from None

    # short rows are padded with NaN; real empty cells stay ""
    cells = raw.apply(lambda column: column.str.strip())
    blank = cells.fillna("").eq("").all(axis=1).to_numpy()
    if blank[0]:
        raise EmptyDatasetError(1, "missing header")
    header = cells.iloc[0].tolist()
    if header[-1] != CLASS_COLUMN:
        raise ColumnCountError(1, f"last header column must be {CLASS_COLUMN!r}")
    features = header[:-1]
    if len(set(features)) != len(features) or not all(features):
        raise ColumnCountError(1, "feature identifiers must be unique and non-empty")

    body = cells.iloc[1:][~blank[1:]]
    if body.empty:
        raise EmptyDatasetError(2, "no data rows")
    row_no = body.index.to_numpy() + 1

    short = body.isna().any(axis=1).to_numpy()
    if short.any():
        first = int(np.argmax(short))
        got = int(body.iloc[first].notna().sum())
        raise ColumnCountError(int(row_no[first]), f"expected {len(header)} columns, got {got}")

    values = body.iloc[:, :-1]
    rows, cols = np.nonzero(~values.isin(BINARY_VALUES).to_numpy())
    if len(rows):
        cell = values.iat[rows[0], cols[0]]
        raise NonBinaryValueError(
            int(row_no[rows[0]]), f"feature {features[cols[0]]!r} has non-binary value {cell!r}"
        )

    labels = body.iloc[:, -1]
    empty = (labels == "").to_numpy()
    if empty.any():
        raise LabelCountError(int(row_no[np.argmax(empty)]), "empty class label")
    distinct = sorted(labels.unique())
    if len(distinct) != 2:
        raise LabelCountError(int(row_no[-1]), f"expected exactly 2 class labels, found {len(distinct)}: {distinct}")

    frame = pd.DataFrame(values.astype(np.int8).to_numpy(), columns=features)
    frame[CLASS_COLUMN] = labels.to_numpy()
    logger.info("Loaded dataset %s: %d instances, %d features", name or "<stream>", len(frame), len(features))
    return Dataset(frame=frame, labels=tuple(distinct), name=name)


def class_counts(ds: Dataset) -> dict[str, int]:
    counts = pd.Series(ds.label_array).value_counts()
    return {label: int(counts.get(label, 0)) for label in ds.labels}


def resolve_positive_class(ds: Dataset, requested: str | None = None) -> str:
    if requested is None:
        return max(ds.labels)
    if requested not in ds.labels:
        raise ConfigError(f"positive class {requested!r} is not one of {list(ds.labels)}")
    return requested


def validate_consistency(ds: Dataset, closure: ClosureTable) -> list[Violation]:
    """Every (instance, feature, ancestor) where the feature is 1 and the ancestor 0."""
    missing = [f for f in ds.features if f not in closure.ancestors]
    if missing:
        raise SchemaError(f"features absent from hierarchy: {missing[:5]}{'...' if len(missing) > 5 else ''}")

    position = {f: i for i, f in enumerate(ds.features)}
    checks = []
    for i, feature in enumerate(ds.features):
        ancestors = sorted((position[a] for a in closure.ancestors[feature] if a in position))
        if ancestors:
            checks.append((i, ancestors))

    values = ds.matrix
    found: list[tuple[int, int, int]] = []
    for i, ancestors in checks:
        bad = (values[:, i] == 1)[:, None] & (values[:, ancestors] == 0)
        for row, col in zip(*np.nonzero(bad)):
            found.append((int(row), i, ancestors[col]))
    found.sort()
    return [Violation(row, ds.features[i], ds.features[j]) for row, i, j in found]


def stratified_folds(ds: Dataset, k: int, seed: int) -> FoldAssignment:
    """Seeded per-class shuffle, then one round-robin over all classes.

    The round-robin position carries over from one class to the next, so
    total fold sizes stay balanced as well as per-class sizes.
    """
    n = len(ds)
    if k < 2:
        raise FoldError(f"fold count must be at least 2, got {k}")
    if k > n:
        raise FoldError(f"fold count {k} exceeds instance count {n}")

    rng = np.random.default_rng(seed)
    fold_of = np.empty(n, dtype=int)
    slot = 0
    labels = ds.label_array
    for label in ds.labels:
        members = np.flatnonzero(labels == label)
        for index in rng.permutation(members):
            fold_of[index] = slot % k
            slot += 1
    return FoldAssignment(fold_of=tuple(int(f) for f in fold_of), k=k, seed=seed)


def restrict(ds_or_inst: Dataset | Instance, keep: Iterable[str]) -> Dataset | Instance:
    """Project a dataset or instance onto `keep`, preserving feature order."""
    keep = set(keep)
    features = ds_or_inst.features
    unknown = keep.difference(features)
    if unknown:
        raise UnknownFeatureError(sorted(unknown)[0])
    if len(keep) == len(features):
        return ds_or_inst
    kept = [f for f in features if f in keep]
    if isinstance(ds_or_inst, Instance):
        return Instance(values={f: ds_or_inst.values[f] for f in kept}, label=ds_or_inst.label)
    frame = ds_or_inst.frame[kept + [CLASS_COLUMN]]
    return Dataset(frame=frame, labels=ds_or_inst.labels, name=ds_or_inst.name)
