"""Datasets of running variables and outcomes, with CSV ingestion."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError

__all__ = ["Dataset", "read_csv", "write_csv"]


@dataclass(frozen=True)
class Dataset:
    """``n`` observations of running variables ``X`` and an optional outcome ``Y``."""

    X: np.ndarray
    Y: np.ndarray | None = None
    x_names: tuple[str, ...] = ()
    y_name: str | None = None
    scale: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        if X.shape[0] == 1 and np.ndim(self.X) == 1:
            X = X.T
        object.__setattr__(self, "X", X)
        if self.Y is not None:
            Y = np.asarray(self.Y, dtype=float).ravel()
            if len(Y) != X.shape[0]:
                raise DataError(f"X has {X.shape[0]} rows but Y has {len(Y)}")
            object.__setattr__(self, "Y", Y)
        if not self.x_names:
            object.__setattr__(self, "x_names", tuple(f"x{j + 1}" for j in range(X.shape[1])))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def standardized(self) -> "Dataset":
        """Each running variable divided by its sample SD (``ddof=1``)."""
        sd = self.X.std(axis=0, ddof=1) if self.n > 1 else np.ones(self.d)
        if np.any(~np.isfinite(sd)) or np.any(sd <= 0):
            raise DataError("cannot standardize a constant running variable")
        return Dataset(self.X / sd, self.Y, self.x_names, self.y_name, scale=sd)


def read_csv(path, x_cols, outcome_col: str | None = None) -> Dataset:
    """Read a headered UTF-8 CSV.

    Raises
    ------
    DataError
        Unreadable file, missing column or a non-numeric entry.
    """
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            rows = [r for r in reader if r]
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from None
    if header is None:
        raise DataError(f"{path} is empty")
    header = [h.strip() for h in header]
    wanted = list(x_cols) + ([outcome_col] if outcome_col is not None else [])
    for col in wanted:
        if col not in header:
            raise DataError(f"column {col!r} not found in {path}")
    idx = [header.index(c) for c in wanted]
    values = np.empty((len(rows), len(idx)))
    for i, row in enumerate(rows):
        if len(row) != len(header):
            raise DataError(f"{path} line {i + 2}: expected {len(header)} fields, got {len(row)}")
        try:
            values[i] = [float(row[j]) for j in idx]
        except ValueError:
            raise DataError(f"{path} line {i + 2}: non-numeric value") from None
    if not np.all(np.isfinite(values)):
        raise DataError(f"{path} contains non-finite values")
    d = len(x_cols)
    Y = values[:, d] if outcome_col is not None else None
    return Dataset(values[:, :d].reshape(len(rows), d), Y, tuple(x_cols), outcome_col)


def write_csv(target, columns: dict) -> None:
    """Write equal-length columns to a path or text stream; floats round-trip exactly."""
    if hasattr(target, "write"):
        _write_rows(target, columns)
        return
    with Path(target).open("w", newline="", encoding="utf-8") as fh:
        _write_rows(fh, columns)


def _write_rows(fh, columns: dict) -> None:
    names = list(columns)
    arrays = [np.asarray(columns[k]) for k in names]
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(names)
    for row in zip(*arrays):
        w.writerow([repr(float(v)) if isinstance(v, np.floating) else int(v) for v in row])
