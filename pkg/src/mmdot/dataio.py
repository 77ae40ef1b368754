"""CSV and JSON file helpers shared by the experiment harnesses and the CLI.

CSV convention: first row is a header, UTF-8, comma-separated, ``.`` decimal.
An optional integer column named ``label`` carries class ids; every other
column is a numeric feature.
"""

from __future__ import annotations

import csv
import json
import os
import tempfile
from dataclasses import dataclass

import numpy as np

from .errors import DatasetError


@dataclass(frozen=True)
class LabeledDataset:
    """Feature matrix with optional integer class labels."""

    features: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        f = np.atleast_2d(np.asarray(self.features, dtype=float))
        object.__setattr__(self, "features", f)
        if self.labels is not None:
            lab = np.asarray(self.labels, dtype=int)
            if lab.shape[0] != f.shape[0]:
                raise DatasetError(
                    f"{lab.shape[0]} labels for {f.shape[0]} feature rows"
                )
            object.__setattr__(self, "labels", lab)

    def __len__(self):
        return self.features.shape[0]


class CsvFormatError(ValueError):
    """CSV parse failure; message names file, line, and column."""


def read_labeled_csv(path) -> LabeledDataset:
    """Read a header-first CSV into a LabeledDataset.

    Raises CsvFormatError naming file, line, and column on any parse
    failure.  An empty data section yields a 0-row dataset whose feature
    dimension comes from the header.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvFormatError(f"{path}: empty file, expected a header row")
        header = [h.strip() for h in header]
        label_idx = header.index("label") if "label" in header else None
        feat_idx = [k for k in range(len(header)) if k != label_idx]
        rows, labels = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise CsvFormatError(
                    f"{path}: line {lineno}: expected {len(header)} columns, got {len(row)}"
                )
            try:
                rows.append([float(row[k]) for k in feat_idx])
            except ValueError:
                bad = next(k for k in feat_idx if not _is_float(row[k]))
                raise CsvFormatError(
                    f"{path}: line {lineno}: column {header[bad]!r}: "
                    f"not a number: {row[bad]!r}"
                ) from None
            if label_idx is not None:
                try:
                    labels.append(int(row[label_idx]))
                except ValueError:
                    raise CsvFormatError(
                        f"{path}: line {lineno}: column 'label': "
                        f"not an integer: {row[label_idx]!r}"
                    ) from None
    features = np.array(rows, dtype=float) if rows else np.zeros((0, len(feat_idx)))
    return LabeledDataset(
        features=features,
        labels=np.array(labels, dtype=int) if label_idx is not None else None,
    )


def _is_float(s):
    try:
        float(s)
        return True
    except ValueError:
        return False


def read_matrix_csv(path) -> np.ndarray:
    """Read a header-first all-numeric CSV as a dense matrix."""
    ds = read_labeled_csv(path)
    if ds.labels is not None:
        raise CsvFormatError(f"{path}: matrix CSV must not carry a 'label' column")
    return ds.features


def _atomic_write(path, payload: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_matrix_csv(path, M, header=None, extra_columns=None) -> None:
    """Write a matrix as CSV with a header row, atomically.

    ``extra_columns`` is an optional list of ``(name, values)`` appended
    after the numeric columns (used for e.g. the fallback flag).
    """
    M = np.atleast_2d(np.asarray(M))
    if header is None:
        header = [f"y{k}" for k in range(M.shape[1])]
    names = list(header)
    extras = extra_columns or []
    names += [name for name, _ in extras]
    lines = [",".join(names)]
    for i in range(M.shape[0]):
        cells = [repr(float(x)) for x in M[i]]
        cells += [str(vals[i]) for _, vals in extras]
        lines.append(",".join(cells))
    _atomic_write(path, "\n".join(lines) + "\n")


def write_json(path, doc) -> None:
    """Serialize to JSON atomically; floats use shortest round-trip repr."""
    _atomic_write(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")


def fnv1a64(data: bytes) -> str:
    """64-bit FNV-1a digest as a 16-hex-digit string."""
    h = 0xCBF29CE484222325
    for b in data:
        h ^= b
        h = (h * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return f"{h:016x}"


def file_digest(path) -> str:
    with open(path, "rb") as fh:
        return fnv1a64(fh.read())
