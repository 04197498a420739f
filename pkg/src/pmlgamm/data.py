"""Grouped datasets and their CSV representation.

A dataset holds responses ``y`` with covariate rows ``x`` partitioned
into groups that share a random intercept. Rows are stored in a
canonical order — groups sorted by id, rows within a group sorted by
(covariates, response) — so that objective values are bit-identical no
matter how the input rows were ordered.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import DataFormatError, DomainError

CSV_GROUP_COLUMN = "group"
CSV_RESPONSE_COLUMN = "y"


@dataclass(frozen=True)
class Dataset:
    """Immutable grouped regression data.

    Attributes
    ----------
    y : (n,) responses
    X : (n, p) covariates
    group_ids : (m,) integer group labels, strictly increasing
    group_starts : (m,) row offset of each group
    group_sizes : (m,) rows per group
    row_group : (n,) group index (0..m-1) of each row
    """

    y: np.ndarray
    X: np.ndarray
    group_ids: np.ndarray
    group_starts: np.ndarray
    group_sizes: np.ndarray
    row_group: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def m(self) -> int:
        return self.group_ids.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def group_rows(self, i: int):
        """(y, X) rows of group ``i`` (positional index, not label)."""
        s = self.group_starts[i]
        e = s + self.group_sizes[i]
        return self.y[s:e], self.X[s:e]

    def group_slices(self):
        for i in range(self.m):
            s = self.group_starts[i]
            yield slice(s, s + self.group_sizes[i])


def from_arrays(y, X, groups) -> Dataset:
    """Build a dataset from flat arrays, canonicalizing the row order.

    ``groups`` holds one integer label per row; rows sharing a label form
    a group. Row order in the input is irrelevant.
    """
    y = np.ascontiguousarray(np.asarray(y, dtype=float).ravel())
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    groups = np.asarray(groups)
    if np.any(groups != np.floor(np.asarray(groups, dtype=float))):
        raise DomainError("group labels must be integers")
    groups = groups.astype(np.int64).ravel()
    if not (y.shape[0] == X.shape[0] == groups.shape[0]):
        raise DomainError(
            f"inconsistent lengths: y={y.shape[0]}, X={X.shape[0]}, "
            f"groups={groups.shape[0]}"
        )
    if y.shape[0] == 0:
        raise DomainError("dataset must contain at least one row")
    if not np.all(np.isfinite(X)):
        raise DomainError("covariates must be finite")

    # canonical order: group label, then covariates, then response
    order = np.lexsort((y,) + tuple(X[:, j] for j in range(X.shape[1] - 1, -1, -1)) + (groups,))
    y, X, groups = y[order], np.ascontiguousarray(X[order]), groups[order]

    ids, starts, sizes = np.unique(groups, return_index=True, return_counts=True)
    row_group = np.repeat(np.arange(ids.shape[0]), sizes)
    return Dataset(
        y=y,
        X=X,
        group_ids=ids,
        group_starts=starts.astype(np.int64),
        group_sizes=sizes.astype(np.int64),
        row_group=row_group,
    )


def from_groups(groups) -> Dataset:
    """Build a dataset from ``[(group_id, y_rows, X_rows), ...]`` triples."""
    ids = [g[0] for g in groups]
    if len(set(ids)) != len(ids):
        raise DomainError("group ids must be unique")
    ys, Xs, labels = [], [], []
    for gid, y_g, X_g in groups:
        y_g = np.asarray(y_g, dtype=float).ravel()
        X_g = np.asarray(X_g, dtype=float)
        if X_g.ndim == 1:
            X_g = X_g[:, None]
        if y_g.shape[0] == 0:
            raise DomainError(f"group {gid} has no rows")
        ys.append(y_g)
        Xs.append(X_g)
        labels.append(np.full(y_g.shape[0], gid, dtype=np.int64))
    return from_arrays(np.concatenate(ys), np.vstack(Xs), np.concatenate(labels))


def read_csv(path) -> Dataset:
    """Read a dataset from CSV with header ``group,y,x1,...,xp``."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        expected_x = [f"x{j}" for j in range(1, len(header) - 1)]
        if (
            len(header) < 3
            or header[0] != CSV_GROUP_COLUMN
            or header[1] != CSV_RESPONSE_COLUMN
            or header[2:] != expected_x
        ):
            raise DataFormatError(
                f"{path}: line 1: expected header 'group,y,x1,...,xp', got {','.join(header)}"
            )
        p = len(header) - 2
        groups, ys, xs = [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != p + 2:
                raise DataFormatError(
                    f"{path}: line {lineno}: expected {p + 2} fields, got {len(row)}"
                )
            try:
                groups.append(int(row[0]))
                ys.append(float(row[1]))
                xs.append([float(v) for v in row[2:]])
            except ValueError as exc:
                raise DataFormatError(f"{path}: line {lineno}: {exc}") from None
    if not ys:
        raise DataFormatError(f"{path}: no data rows")
    try:
        return from_arrays(ys, xs, groups)
    except DomainError as exc:
        raise DataFormatError(f"{path}: {exc}") from None


def write_csv(data: Dataset, path) -> None:
    """Write ``data`` in the ``group,y,x1,...,xp`` format."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([CSV_GROUP_COLUMN, CSV_RESPONSE_COLUMN]
                        + [f"x{j}" for j in range(1, data.p + 1)])
        labels = data.group_ids[data.row_group]
        for i in range(data.n):
            writer.writerow(
                [int(labels[i]), _fmt(data.y[i])] + [_fmt(v) for v in data.X[i]]
            )


def _fmt(v) -> str:
    v = float(v)
    return str(int(v)) if v.is_integer() else repr(v)
