"""Dataset container, CSV round trips, splitting, and generic ingestion.

The canonical on-disk form is a CSV with header ``x1..xd,t1..tK,y``.
Floats are written with 17 significant digits so write -> read is exact.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError, SchemaError

_SPLIT_STREAM = 424_243
_FMT = "%.17g"


@dataclass
class Dataset:
    """Covariates, binary treatments, and outcomes for N units."""

    x: np.ndarray
    t: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.t = np.asarray(self.t)
        self.y = np.asarray(self.y, dtype=np.float64).reshape(-1)
        if self.x.ndim != 2 or self.t.ndim != 2:
            raise DataError("covariates and treatments must be 2-D")
        if not (self.x.shape[0] == self.t.shape[0] == self.y.shape[0]):
            raise DataError(
                f"row counts disagree: x {self.x.shape[0]}, t {self.t.shape[0]}, "
                f"y {self.y.shape[0]}")
        if not np.isin(self.t, (0, 1)).all():
            raise DataError("treatment matrix must be binary")
        self.t = self.t.astype(np.int8)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def d(self) -> int:
        return self.x.shape[1]

    @property
    def k(self) -> int:
        return self.t.shape[1]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.intp)
        return Dataset(self.x[idx], self.t[idx], self.y[idx])


def write_dataset_csv(path, ds: Dataset) -> None:
    header = ([f"x{j+1}" for j in range(ds.d)]
              + [f"t{k+1}" for k in range(ds.k)] + ["y"])
    body = np.concatenate(
        [ds.x, ds.t.astype(np.float64), ds.y[:, None]], axis=1)
    np.savetxt(path, body, fmt=_FMT, delimiter=",",
               header=",".join(header), comments="")


def read_dataset_csv(path) -> Dataset:
    with open(path, newline="") as fh:
        header = fh.readline().strip().split(",")
    d = sum(1 for c in header if c.startswith("x"))
    k = sum(1 for c in header if c.startswith("t"))
    expected = [f"x{j+1}" for j in range(d)] + [f"t{j+1}" for j in range(k)] + ["y"]
    if header != expected or d == 0 or k == 0:
        raise SchemaError(f"unexpected dataset header {header}")
    body = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if body.shape[1] != d + k + 1:
        raise DataError(f"expected {d + k + 1} columns, got {body.shape[1]}")
    t_mat = body[:, d:d + k]
    if not np.isin(t_mat, (0.0, 1.0)).all():
        bad = int(np.argwhere(~np.isin(t_mat, (0.0, 1.0)))[0][0]) + 1
        raise DataError(f"non-binary treatment value at data row {bad}")
    return Dataset(body[:, :d], t_mat.astype(np.int8), body[:, -1])


def split_indices(n: int, frac: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic train/test permutation split: a pure function of the seed."""
    if not 0.0 < frac < 1.0:
        raise ConfigError(f"split fraction must be in (0,1), got {frac}")
    perm = np.random.default_rng([seed, _SPLIT_STREAM]).permutation(n)
    n_train = int(n * frac)
    if n_train == 0 or n_train == n:
        raise ConfigError(f"split fraction {frac} leaves an empty side for n={n}")
    return perm[:n_train], perm[n_train:]


def train_test_split(ds: Dataset, frac: float, seed: int) -> tuple[Dataset, Dataset]:
    tr, te = split_indices(ds.n, frac, seed)
    return ds.subset(tr), ds.subset(te)


def load_schema(path) -> dict:
    with open(path) as fh:
        doc = json.load(fh)
    for field in ("covariates", "treatments", "outcome"):
        if field not in doc:
            raise SchemaError(f"schema is missing the '{field}' field")
    return doc


def ingest_csv(path, schema: dict) -> tuple[Dataset, dict | None]:
    """Read an arbitrary CSV through a column-role schema.

    Schema fields: ``covariates`` (list of column names), ``treatments``
    (list), ``outcome`` (name), optional ``standardize_outcome`` (bool).
    Standardization is affine and invertible; the returned scaler records
    mean and standard deviation so effects can be mapped back.
    """
    cov_cols = list(schema["covariates"])
    treat_cols = list(schema["treatments"])
    out_col = schema["outcome"]
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path} is empty") from None
        col_idx = {name: i for i, name in enumerate(header)}
        for name in cov_cols + treat_cols + [out_col]:
            if name not in col_idx:
                raise SchemaError(f"column '{name}' not found in {path}")
        x_rows, t_rows, y_rows = [], [], []
        for row_no, row in enumerate(reader, start=1):
            if not row:
                continue
            try:
                x_rows.append([float(row[col_idx[c]]) for c in cov_cols])
                t_vals = [float(row[col_idx[c]]) for c in treat_cols]
                y_rows.append(float(row[col_idx[out_col]]))
            except (ValueError, IndexError) as exc:
                raise DataError(f"bad value at data row {row_no}: {exc}") from None
            for v in t_vals:
                if v not in (0.0, 1.0):
                    raise DataError(
                        f"non-binary treatment value {v!r} at data row {row_no}")
            t_rows.append(t_vals)
    if not x_rows:
        raise DataError(f"{path} has no data rows")
    x = np.asarray(x_rows)
    t_mat = np.asarray(t_rows, dtype=np.int8)
    y = np.asarray(y_rows)
    scaler = None
    if schema.get("standardize_outcome", False):
        mean = float(y.mean())
        sd = float(y.std())
        if sd == 0.0:
            raise DataError("outcome has zero variance; cannot standardize")
        y = (y - mean) / sd
        scaler = {"mean": mean, "std": sd}
    return Dataset(x, t_mat, y), scaler
