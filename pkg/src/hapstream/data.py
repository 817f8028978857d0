"""Benchmark dataset loading.

Two on-disk formats are understood: svmlight sparse text
(``label idx:val ...`` with 1-based ascending indices) and dense CSV.
"""
from __future__ import annotations

import csv
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataMissingError, ParseError

DATA_ENV = "HAPSTREAM_DATA_DIR"


@dataclass(frozen=True)
class RawDataset:
    name: str
    X: np.ndarray  # (rows, d), on-disk row and column order
    y: np.ndarray  # (rows,), int labels in [0, num_classes)
    num_classes: int

    def __post_init__(self):
        if self.X.ndim != 2 or self.X.shape[0] != self.y.shape[0]:
            raise ValueError(f"{self.name}: X {self.X.shape} and y {self.y.shape} disagree")
        if self.y.size and (self.y.min() < 0 or self.y.max() >= self.num_classes):
            raise ValueError(f"{self.name}: labels outside [0, {self.num_classes})")

    @property
    def num_features(self) -> int:
        return self.X.shape[1]

    def __len__(self):
        return self.X.shape[0]

    def head(self, n: int) -> RawDataset:
        return RawDataset(self.name, self.X[:n], self.y[:n], self.num_classes)


def _remap_labels(raw: list) -> tuple[np.ndarray, int]:
    """Map labels to 0..C-1 by sorted unique value ({-1,+1} -> {0,1}, {1,2} -> {0,1})."""
    classes = sorted(set(raw))
    lookup = {c: i for i, c in enumerate(classes)}
    return np.array([lookup[v] for v in raw], dtype=np.int64), max(len(classes), 2)


def load_svmlight(path, name=None, num_features=None) -> RawDataset:
    """Parse an svmlight/libsvm file into a dense dataset; absent entries are 0."""
    path = Path(path)
    labels, rows = [], []
    d = 0
    with path.open() as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            tokens = line.split()
            try:
                labels.append(float(tokens[0]))
            except ValueError:
                raise ParseError(f"non-numeric label {tokens[0]!r}", lineno) from None
            entries = []
            prev = 0
            for tok in tokens[1:]:
                idx_s, sep, val_s = tok.partition(":")
                try:
                    if not sep:
                        raise ValueError
                    idx, val = int(idx_s), float(val_s)
                except ValueError:
                    raise ParseError(f"bad token {tok!r}", lineno) from None
                if idx <= prev:
                    raise ParseError(f"index {idx} is not ascending (previous {prev})", lineno)
                prev = idx
                entries.append((idx - 1, val))
            d = max(d, prev)
            rows.append(entries)
    if num_features is not None:
        d = max(d, num_features)
    X = np.zeros((len(rows), d))
    for i, entries in enumerate(rows):
        for j, v in entries:
            X[i, j] = v
    y, c = _remap_labels(labels)
    return RawDataset(name or path.stem, X, y, c)


def load_dense_csv(path, label_column=-1, name=None, header=True, delimiter=None) -> RawDataset:
    """Read a rectangular numeric table; ``label_column`` is a name or position.

    Labels may be categorical strings and are mapped via sorted-unique order.
    ``delimiter=None`` sniffs between comma and whitespace.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        text = fh.read()
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if delimiter is None:
        delimiter = "," if "," in lines[0] else None
    if delimiter is None:
        table = [ln.split() for ln in lines]
    else:
        table = list(csv.reader(lines, delimiter=delimiter))
    columns = None
    if header:
        columns, table = [c.strip() for c in table[0]], table[1:]
    width = len(table[0]) if table else len(columns or [])
    if isinstance(label_column, str):
        if columns is None or label_column not in columns:
            raise ParseError(f"label column {label_column!r} not found in header")
        label_column = columns.index(label_column)
    label_column %= width
    first_line = 2 if header else 1
    feats, labels = [], []
    for offset, row in enumerate(table):
        lineno = first_line + offset
        if len(row) != width:
            raise ParseError(f"expected {width} fields, found {len(row)}", lineno)
        raw_label = row[label_column].strip()
        try:
            labels.append(float(raw_label))
        except ValueError:
            labels.append(raw_label)
        try:
            feats.append([float(v) for i, v in enumerate(row) if i != label_column])
        except ValueError:
            raise ParseError("non-numeric feature value", lineno) from None
    if len({type(v) for v in labels}) > 1:
        labels = [str(v) for v in labels]
    y, c = _remap_labels(labels)
    X = np.asarray(feats, dtype=np.float64).reshape(len(feats), width - 1)
    return RawDataset(name or path.stem, X, y, c)


@dataclass(frozen=True)
class DatasetSpec:
    filename: str
    fmt: str  # "svmlight" | "csv"
    aux_fraction: float
    label_column: object = -1
    header: bool = True
    source: str = ""


# aux_fraction values are this package's defaults; see README for provenance.
DATASETS: dict[str, DatasetSpec] = {
    "italy_power": DatasetSpec(
        "italy_power.csv", "csv", 1.0, "label",
        source="UCR ItalyPowerDemand, TRAIN then TEST (scripts/prepare_data.py)"),
    "german": DatasetSpec(
        "german.csv", "csv", 0.5, "label",
        source="UCI Statlog German credit, 24-feature numeric encoding (scripts/prepare_data.py)"),
    "svmguide3": DatasetSpec(
        "svmguide3", "svmlight", 0.5,
        source="https://www.csie.ntu.edu.tw/~cjlin/libsvmtools/datasets/binary/svmguide3"),
    "magic04": DatasetSpec(
        "magic04.data", "csv", 0.5, -1, header=False,
        source="https://archive.ics.uci.edu/dataset/159/magic+gamma+telescope"),
    "a8a": DatasetSpec(
        "a8a", "svmlight", 0.5,
        source="https://www.csie.ntu.edu.tw/~cjlin/libsvmtools/datasets/binary/a8a"),
}


def data_dir() -> Path:
    env = os.environ.get(DATA_ENV)
    if env:
        return Path(env)
    return Path(__file__).resolve().parents[2] / "data"


def dataset_path(name: str) -> Path:
    return data_dir() / DATASETS[name].filename


def load_dataset(name_or_path: str) -> RawDataset:
    """Load a registered benchmark by name, or any svmlight/CSV file by path."""
    if name_or_path in DATASETS:
        spec = DATASETS[name_or_path]
        path = dataset_path(name_or_path)
        if not path.exists():
            raise DataMissingError(
                f"dataset {name_or_path!r} not found at {path}. Place the file there "
                f"(source: {spec.source}) or point ${DATA_ENV} at a directory holding it.")
        if spec.fmt == "svmlight":
            return load_svmlight(path, name=name_or_path)
        return load_dense_csv(path, spec.label_column, name=name_or_path, header=spec.header)
    path = Path(name_or_path)
    if not path.exists():
        raise DataMissingError(f"no registered dataset or file named {name_or_path!r}")
    if path.suffix.lower() in (".csv", ".tsv", ".data"):
        return load_dense_csv(path, name=path.stem)
    return load_svmlight(path)


def default_aux_fraction(name: str) -> float:
    spec = DATASETS.get(name)
    return spec.aux_fraction if spec else 0.5
