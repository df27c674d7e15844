"""CSV ingestion and export for two-class datasets."""

import csv
import gzip
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd

from .._validation import ConfigurationError, IngestionError

__all__ = ["DatasetTable", "ingest_csv", "write_csv"]


@dataclass(frozen=True)
class DatasetTable:
    """Features stored p x n (one column per sample) with labels in {1, 2}."""

    features: np.ndarray
    labels: Optional[np.ndarray]
    feature_names: Optional[tuple] = None
    source_path: str = ""

    @property
    def p(self):
        return self.features.shape[0]

    @property
    def n(self):
        return self.features.shape[1]

    def class_sample(self, label):
        return self.features[:, self.labels == label]

    def class_sizes(self):
        return int(np.sum(self.labels == 1)), int(np.sum(self.labels == 2))

    def require_min_class_size(self, m):
        n1, n2 = self.class_sizes()
        if min(n1, n2) < m:
            raise ConfigurationError(f"each class needs at least {m} samples, got ({n1}, {n2})")


def _open_text(path):
    path = Path(path)
    if path.suffix == ".gz":
        return gzip.open(path, "rt", newline="")
    return open(path, "r", newline="")


def _read_header(path):
    with _open_text(path) as fh:
        try:
            return next(csv.reader(fh))
        except StopIteration:
            raise IngestionError(f"{path}: file is empty") from None


def _parse_labels(values, where):
    out = np.empty(len(values), dtype=np.int64)
    for i, v in enumerate(values):
        try:
            f = float(v)
        except (TypeError, ValueError):
            f = np.nan
        if f not in (1.0, 2.0):
            raise IngestionError(f"{where(i)}: label {v!r} is not 1 or 2")
        out[i] = int(f)
    return out


def ingest_csv(path, features_as_rows=False, label_col="label", require_labels=True):
    """Read a labelled dataset from CSV (optionally gzip-compressed).

    Parameters
    ----------
    path : str or Path
    features_as_rows : bool
        If False (the default) each row is a sample, the header names the
        features, and ``label_col`` is a column. If True each row is a feature
        whose first field is its name, the header names the samples, and the
        labels sit in the row whose name is ``label_col``.
    label_col : str
    require_labels : bool
        When False a file without the label column (or row) is accepted and
        ``labels`` is None.

    Duplicate feature names are kept as given. Any missing or non-numeric
    value raises :class:`IngestionError` naming its file row and column
    (1-based, header is row 1).
    """
    path = Path(path)
    if not path.exists():
        raise IngestionError(f"{path}: no such file")
    header = _read_header(path)
    try:
        # header=None keeps duplicate names; the header is read separately
        raw = pd.read_csv(path, header=None, skiprows=1, low_memory=False, compression="infer",
                          float_precision="round_trip",
                          dtype={0: str} if features_as_rows else None, keep_default_na=True)
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise IngestionError(f"{path}: {exc}") from None
    if raw.shape[1] != len(header):
        raise IngestionError(f"{path}: header has {len(header)} fields but rows have {raw.shape[1]}")

    if features_as_rows:
        names = ["" if pd.isna(v) else v for v in raw.iloc[:, 0].tolist()]
        if label_col in names:
            li = names.index(label_col)
            labels = _parse_labels(raw.iloc[li, 1:].tolist(),
                                   lambda j: f"{path}: row {li + 2}, column {j + 2}")
        elif require_labels:
            raise IngestionError(f"{path}: no row named {label_col!r}")
        else:
            li, labels = -1, None
        keep = np.array([i for i in range(raw.shape[0]) if i != li], dtype=np.intp)
        feature_names = tuple(names[i] for i in keep)
        features = _to_float(raw.iloc[keep, 1:], path, rows=keep + 2,
                             cols=np.arange(2, raw.shape[1] + 1))
    else:
        if label_col in header:
            lc = header.index(label_col)
            labels = _parse_labels(raw.iloc[:, lc].tolist(),
                                   lambda i: f"{path}: row {i + 2}, column {lc + 1}")
        elif require_labels:
            raise IngestionError(f"{path}: no column named {label_col!r}")
        else:
            lc, labels = -1, None
        keep = np.array([j for j in range(raw.shape[1]) if j != lc], dtype=np.intp)
        feature_names = tuple(header[j] for j in keep)
        values = _to_float(raw.iloc[:, keep], path, rows=np.arange(2, raw.shape[0] + 2),
                           cols=keep + 1)
        features = np.ascontiguousarray(values.T)

    return DatasetTable(features=features, labels=labels, feature_names=feature_names,
                        source_path=str(path))


def _to_float(block, path, rows, cols):
    # rows / cols hold 1-based file coordinates for each block position
    bad_cols = [j for j, dt in enumerate(block.dtypes) if not pd.api.types.is_numeric_dtype(dt)]
    fixed = {}
    for j in bad_cols:
        col = block.iloc[:, j]
        conv = pd.to_numeric(col, errors="coerce")
        bad = np.flatnonzero(conv.isna().to_numpy() & col.notna().to_numpy())
        if bad.size:
            i = bad[0]
            raise IngestionError(
                f"{path}: invalid value {col.iloc[i]!r} at row {rows[i]}, column {cols[j]}"
            )
        fixed[j] = conv.to_numpy(dtype=np.float64)
    values = block.to_numpy(dtype=np.float64) if not fixed else np.column_stack(
        [fixed[j] if j in fixed else block.iloc[:, j].to_numpy(dtype=np.float64)
         for j in range(block.shape[1])]
    )
    finite = np.isfinite(values)
    if not finite.all():
        i, j = np.argwhere(~finite)[0]
        what = "missing value" if np.isnan(values[i, j]) else f"non-finite value {values[i, j]}"
        raise IngestionError(f"{path}: {what} at row {rows[i]}, column {cols[j]}")
    return values


def write_csv(table, path, features_as_rows=False, label_col="label"):
    """Write ``table`` in the layout :func:`ingest_csv` reads back."""
    names = table.feature_names or tuple(f"f{i}" for i in range(table.p))
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "wt", newline="") as fh:
        w = csv.writer(fh)
        if features_as_rows:
            w.writerow(["feature"] + [f"s{j}" for j in range(table.n)])
            if table.labels is not None:
                w.writerow([label_col] + [int(v) for v in table.labels])
            for name, row in zip(names, table.features):
                w.writerow([name] + [repr(float(v)) for v in row])
        else:
            labelled = table.labels is not None
            w.writerow(list(names) + ([label_col] if labelled else []))
            for j in range(table.n):
                tail = [int(table.labels[j])] if labelled else []
                w.writerow([repr(float(v)) for v in table.features[:, j]] + tail)
