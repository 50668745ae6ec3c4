"""CSV ingestion and the bundled example datasets."""

from __future__ import annotations

import csv
import math
from importlib import resources
from pathlib import Path

import numpy as np

from .models import Dataset

__all__ = [
    "InputError",
    "read_dataset",
    "bundled_path",
    "normal_sample",
    "poisson_sample",
    "gamma_sample",
    "finney",
    "iris",
]

BUNDLED = ("normal", "poisson", "gamma", "finney", "iris")


class InputError(ValueError):
    """Malformed input file; the message names the offending row/column."""


def bundled_path(name: str) -> Path:
    if name not in BUNDLED:
        raise KeyError(f"no bundled dataset {name!r}; available: {BUNDLED}")
    return Path(str(resources.files("mescore") / "data" / f"{name}.csv"))


def _read_table(path) -> tuple[list[str], np.ndarray]:
    path = Path(path)
    try:
        fh = path.open(newline="")
    except OSError as exc:
        raise InputError(f"cannot open {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise InputError(f"{path}: empty file, a header row is required") from None
        if not header or any(h == "" for h in header):
            raise InputError(f"{path}: header row has empty column names")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(c.strip() == "" for c in row):
                continue
            if len(row) != len(header):
                raise InputError(f"{path}: row {lineno} has {len(row)} fields, expected {len(header)}")
            vals = []
            for col, cell in zip(header, row):
                try:
                    v = float(cell)
                except ValueError:
                    raise InputError(f"{path}: row {lineno}, column {col!r}: not a number: {cell!r}") from None
                if not math.isfinite(v):
                    raise InputError(f"{path}: row {lineno}, column {col!r}: non-finite value")
                vals.append(v)
            rows.append(vals)
    if not rows:
        raise InputError(f"{path}: no data rows")
    return header, np.array(rows, dtype=float)


def read_dataset(path, family: str, log_predictors: bool = False) -> Dataset:
    """Read a headed CSV into a :class:`Dataset` for ``family``.

    The response is the column named ``y`` (or the only column). For the
    logistic family every other column is a predictor, in file order, and
    an intercept is prepended. ``log_predictors`` log-transforms them.
    """
    header, table = _read_table(path)
    if "y" in header:
        iy = header.index("y")
    elif len(header) == 1:
        iy = 0
    else:
        raise InputError(f"{path}: no response column named 'y' in header {header}")
    y = table[:, iy]
    if family != "logistic":
        return Dataset(y=y)
    bad = np.flatnonzero((y != 0) & (y != 1))
    if bad.size:
        raise InputError(f"{path}: row {bad[0] + 2}, column 'y': logistic response must be 0 or 1, got {y[bad[0]]}")
    pred_idx = [j for j in range(len(header)) if j != iy]
    if not pred_idx:
        return Dataset(y=y, X=np.ones((y.size, 1)))
    Z = table[:, pred_idx]
    names = [header[j] for j in pred_idx]
    if log_predictors:
        if np.any(Z <= 0):
            r, c = np.argwhere(Z <= 0)[0]
            raise InputError(f"{path}: row {r + 2}, column {names[c]!r}: cannot log-transform {Z[r, c]}")
        Z = np.log(Z)
        names = [f"log_{nm}" for nm in names]
    return Dataset.logistic(Z, y, names)


def normal_sample() -> Dataset:
    return read_dataset(bundled_path("normal"), "normal")


def poisson_sample() -> Dataset:
    return read_dataset(bundled_path("poisson"), "poisson")


def gamma_sample() -> Dataset:
    return read_dataset(bundled_path("gamma"), "gamma")


def finney() -> Dataset:
    """Vasoconstriction data with log(Volume), log(Rate) predictors."""
    return read_dataset(bundled_path("finney"), "logistic", log_predictors=True)


def iris() -> Dataset:
    """Setosa (y=1) vs virginica (y=0) on sepal length and width."""
    return read_dataset(bundled_path("iris"), "logistic")
