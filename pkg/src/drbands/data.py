"""Core data containers and elementary model operations.

The model throughout the package is a functional-response binary regression:
for a threshold index u in [0, 1] the indicator 1{y <= y_u} is regressed on a
small block of target covariates D and a high-dimensional control block X
through the logistic link. This module holds the immutable containers shared
by the estimation layers (dataset, threshold rule, evaluation grid, search
box) and the small operations on them: indicator construction, stable link
evaluation, leave-one-target-out design assembly, and CSV ingestion for the
command line.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np
from scipy.special import expit

from .errors import DataValidationError, InvalidArgumentError

__all__ = [
    "Dataset",
    "ResponseThresholds",
    "IndexGrid",
    "ThetaBox",
    "ColumnRoles",
    "functional_response",
    "logistic_link",
    "link_derivative",
    "design_without_j",
    "design_without_j_names",
    "load_csv_dataset",
]


def _frozen_array(a, dtype=np.float64, ndim=None, name="array"):
    out = np.ascontiguousarray(a, dtype=dtype)
    if ndim is not None and out.ndim != ndim:
        raise InvalidArgumentError(f"{name} must be {ndim}-dimensional, got shape {out.shape}")
    if not np.all(np.isfinite(out)):
        raise InvalidArgumentError(f"{name} contains non-finite entries")
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Dataset:
    """Immutable (D, X, y) sample.

    Parameters
    ----------
    d : array, shape (n, p_tilde)
        Target covariates; inference is run coefficient by coefficient on
        these columns.
    x : array, shape (n, p)
        Controls entering every regression unpenalized in dimension but
        penalized in the selection steps. ``p`` may be zero.
    y : array, shape (n,)
        Scalar response; thresholded into indicators per u.
    d_names, x_names : tuples of str, optional
        Column labels; defaults are d1..dp_tilde / x1..xp.
    """

    d: np.ndarray
    x: np.ndarray
    y: np.ndarray
    d_names: tuple[str, ...] = ()
    x_names: tuple[str, ...] = ()

    def __post_init__(self):
        d = _frozen_array(self.d, ndim=2, name="d")
        x = np.asarray(self.x, dtype=np.float64)
        if x.ndim == 1 and x.size == 0:
            x = x.reshape(d.shape[0], 0)
        x = _frozen_array(x, ndim=2, name="x")
        y = _frozen_array(self.y, ndim=1, name="y")
        n = d.shape[0]
        if n < 2:
            raise InvalidArgumentError("need at least two observations")
        if x.shape[0] != n or y.shape[0] != n:
            raise InvalidArgumentError(
                f"row mismatch: d has {n}, x has {x.shape[0]}, y has {y.shape[0]}"
            )
        if d.shape[1] < 1:
            raise InvalidArgumentError("d must have at least one column")
        d_names = tuple(self.d_names) or tuple(f"d{k + 1}" for k in range(d.shape[1]))
        x_names = tuple(self.x_names) or tuple(f"x{k + 1}" for k in range(x.shape[1]))
        if len(d_names) != d.shape[1]:
            raise InvalidArgumentError("d_names length does not match d")
        if len(x_names) != x.shape[1]:
            raise InvalidArgumentError("x_names length does not match x")
        if len(set(d_names) | set(x_names)) != len(d_names) + len(x_names):
            raise InvalidArgumentError("column names must be distinct")
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "d_names", d_names)
        object.__setattr__(self, "x_names", x_names)

    @property
    def n(self) -> int:
        return self.d.shape[0]

    @property
    def p_tilde(self) -> int:
        return self.d.shape[1]

    @property
    def p(self) -> int:
        return self.x.shape[1]


@dataclass(frozen=True)
class ResponseThresholds:
    """Affine threshold rule y_u = (1 - u) * y_lo + u * y_hi for u in [0, 1]."""

    y_lo: float
    y_hi: float

    def __post_init__(self):
        if not (math.isfinite(self.y_lo) and math.isfinite(self.y_hi)):
            raise InvalidArgumentError("thresholds must be finite")
        if self.y_lo > self.y_hi:
            raise InvalidArgumentError("y_lo must not exceed y_hi")

    def threshold(self, u: float) -> float:
        return (1.0 - u) * self.y_lo + u * self.y_hi

    @classmethod
    def from_quantiles(cls, y, lo: float = 0.05, hi: float = 0.95) -> "ResponseThresholds":
        if not 0.0 <= lo <= hi <= 1.0:
            raise InvalidArgumentError("quantile levels must satisfy 0 <= lo <= hi <= 1")
        ql, qh = np.quantile(np.asarray(y, dtype=np.float64), [lo, hi])
        return cls(float(ql), float(qh))


@dataclass(frozen=True)
class IndexGrid:
    """Finite evaluation grid: u values times target indices (1-based)."""

    u_values: tuple[float, ...]
    j_values: tuple[int, ...]

    def __post_init__(self):
        u = tuple(float(v) for v in self.u_values)
        j = tuple(int(v) for v in self.j_values)
        if not u or not j:
            raise InvalidArgumentError("grid must be non-empty in both axes")
        if any(not (0.0 <= v <= 1.0) or not math.isfinite(v) for v in u):
            raise InvalidArgumentError("u values must lie in [0, 1]")
        if any(b <= a for a, b in zip(u, u[1:])):
            raise InvalidArgumentError("u values must be strictly increasing")
        if len(set(j)) != len(j) or any(v < 1 for v in j):
            raise InvalidArgumentError("j values must be distinct integers >= 1")
        object.__setattr__(self, "u_values", u)
        object.__setattr__(self, "j_values", j)

    @property
    def size(self) -> int:
        return len(self.u_values) * len(self.j_values)

    def cells(self) -> Iterator[tuple[float, int]]:
        """Iterate (u, j) in row-major order: u outer, j inner."""
        for u in self.u_values:
            for j in self.j_values:
                yield u, j


@dataclass(frozen=True)
class ThetaBox:
    """Closed search interval for one target coefficient."""

    lo: float
    hi: float

    def __post_init__(self):
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)) or self.lo >= self.hi:
            raise InvalidArgumentError("box must be a finite interval with lo < hi")

    @classmethod
    def around(cls, center: float, scale: float = 10.0) -> "ThetaBox":
        # default search box: center +- scale * max(1, |center|)
        radius = scale * max(1.0, abs(center))
        return cls(center - radius, center + radius)

    def contains(self, value: float) -> bool:
        return self.lo <= value <= self.hi

    def clip(self, value: float) -> float:
        return min(max(value, self.lo), self.hi)


def functional_response(ds: Dataset, u: float, thresholds: ResponseThresholds) -> np.ndarray:
    """Indicator response 1{y_i <= (1 - u) y_lo + u y_hi} as a float vector."""
    if not math.isfinite(u) or not 0.0 <= u <= 1.0:
        raise InvalidArgumentError(f"u must be a finite value in [0, 1], got {u!r}")
    return (ds.y <= thresholds.threshold(u)).astype(np.float64)


def logistic_link(t):
    """Logistic cdf exp(t) / (1 + exp(t)), stable over the whole real line."""
    return expit(t)


def link_derivative(t):
    """Derivative of the logistic cdf, Lambda(t) * (1 - Lambda(t))."""
    lam = expit(t)
    return lam * (1.0 - lam)


def design_without_j(ds: Dataset, j: int) -> np.ndarray:
    """Controls for target j: the other D columns followed by X.

    ``j`` is 1-based. For a single target the result is X itself.
    """
    if not 1 <= j <= ds.p_tilde:
        raise InvalidArgumentError(f"j must be in 1..{ds.p_tilde}, got {j}")
    if ds.p_tilde == 1:
        return ds.x
    others = np.delete(ds.d, j - 1, axis=1)
    out = np.hstack((others, ds.x))
    out.setflags(write=False)
    return out


def design_without_j_names(ds: Dataset, j: int) -> tuple[str, ...]:
    """Column labels matching ``design_without_j``."""
    if not 1 <= j <= ds.p_tilde:
        raise InvalidArgumentError(f"j must be in 1..{ds.p_tilde}, got {j}")
    return tuple(nm for k, nm in enumerate(ds.d_names) if k != j - 1) + ds.x_names


@dataclass(frozen=True)
class ColumnRoles:
    """Column-role mapping for CSV ingestion.

    ``x_columns=None`` assigns every non-response, non-target column to X.
    """

    response: str
    d_columns: tuple[str, ...]
    x_columns: tuple[str, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "d_columns", tuple(self.d_columns))
        if self.x_columns is not None:
            object.__setattr__(self, "x_columns", tuple(self.x_columns))
        if not self.d_columns:
            raise InvalidArgumentError("at least one target column is required")
        claimed = [self.response, *self.d_columns, *(self.x_columns or ())]
        if len(set(claimed)) != len(claimed):
            raise InvalidArgumentError("response/target/control roles overlap")


def _parse_cell(raw: str, line: int, column: str) -> float:
    text = raw.strip()
    if not text:
        raise DataValidationError(f"missing value in column {column!r}", line)
    try:
        value = float(text)
    except ValueError:
        raise DataValidationError(
            f"cannot parse {raw!r} in column {column!r} as a number", line
        ) from None
    if not math.isfinite(value):
        raise DataValidationError(f"non-finite value in column {column!r}", line)
    return value


def load_csv_dataset(path, roles: ColumnRoles) -> Dataset:
    """Read a header-first CSV into a Dataset under the given column roles.

    Every cell must parse as a finite decimal number; failures name the
    offending physical line.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataValidationError("file is empty") from None
        header = [h.strip() for h in header]
        if len(set(header)) != len(header):
            raise DataValidationError("duplicate column names in header", line=1)
        positions = {name: k for k, name in enumerate(header)}
        for name in (roles.response, *roles.d_columns, *(roles.x_columns or ())):
            if name not in positions:
                raise DataValidationError(f"column {name!r} not found in header", line=1)
        x_columns = roles.x_columns
        if x_columns is None:
            used = {roles.response, *roles.d_columns}
            x_columns = tuple(name for name in header if name not in used)
        rows = []
        for row in reader:
            line = reader.line_num
            if len(row) != len(header):
                raise DataValidationError(
                    f"expected {len(header)} fields, got {len(row)}", line
                )
            rows.append([_parse_cell(cell, line, header[k]) for k, cell in enumerate(row)])
    if len(rows) < 2:
        raise DataValidationError("need at least two data rows")
    table = np.asarray(rows, dtype=np.float64)
    y = table[:, positions[roles.response]]
    d = table[:, [positions[name] for name in roles.d_columns]]
    if x_columns:
        x = table[:, [positions[name] for name in x_columns]]
    else:
        x = np.empty((table.shape[0], 0))
    return Dataset(d=d, x=x, y=y, d_names=tuple(roles.d_columns), x_names=tuple(x_columns))
