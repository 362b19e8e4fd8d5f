"""Data model and link functions shared across the package.

Covariate rows always carry a leading 1 for the intercept, so a model with
``d`` covariates has ``d + 1`` coefficients and ``beta[0]`` is the intercept.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy import special


class DatasetError(ValueError):
    """Raised for malformed input rows or files."""


class DimensionError(ValueError):
    """Raised when coefficient and covariate dimensions disagree."""


class Link(enum.Enum):
    LOGISTIC = "logistic"
    PROBIT = "probit"

    @classmethod
    def parse(cls, value: "Link | str") -> "Link":
        if isinstance(value, Link):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"unknown link {value!r}; expected 'logistic' or 'probit'") from None


_SQRT2 = math.sqrt(2.0)


def _logistic(t: np.ndarray) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    out = np.empty_like(t)
    pos = t >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    et = np.exp(t[~pos])
    out[~pos] = et / (1.0 + et)
    return out


def _probit(t: np.ndarray) -> np.ndarray:
    return 0.5 * special.erfc(-np.asarray(t, dtype=float) / _SQRT2)


def inverse_link(link: Link, eta) -> np.ndarray:
    """Mean response ``q`` as a function of the linear predictor ``eta``."""
    eta = np.asarray(eta, dtype=float)
    scalar = eta.ndim == 0
    eta = np.atleast_1d(eta)
    q = _logistic(eta) if link is Link.LOGISTIC else _probit(eta)
    return q[0] if scalar else q


def log_inverse_link(link: Link, eta) -> np.ndarray:
    """``log q(eta)`` without forming ``q``; ``log(1 - q(eta)) == log_inverse_link(-eta)``."""
    eta = np.asarray(eta, dtype=float)
    if link is Link.LOGISTIC:
        return -np.logaddexp(0.0, -eta)
    return special.log_ndtr(eta)


def _as_vector(v, name: str) -> np.ndarray:
    arr = np.asarray(v, dtype=float)
    if arr.ndim != 1:
        raise DimensionError(f"{name} must be a 1-d vector, got shape {arr.shape}")
    return arr


def linear_predictor(beta, x) -> float | np.ndarray:
    """``beta @ x`` for a single covariate vector or an ``(n, d+1)`` design."""
    beta = _as_vector(beta, "beta")
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != beta.shape[0]:
        raise DimensionError(f"beta has length {beta.shape[0]} but x has {x.shape[-1]} columns")
    if x.ndim == 1:
        return float(np.dot(beta, x))
    return x @ beta


def mean_response(link: Link | str, beta, x) -> float | np.ndarray:
    """``q_beta(x)`` under ``link``; accepts a single vector or a design matrix."""
    link = Link.parse(link)
    eta = linear_predictor(beta, x)
    q = inverse_link(link, eta)
    return float(q) if np.ndim(q) == 0 else q


def covariate_vector(values: Sequence[float]) -> np.ndarray:
    """Build an intercept-augmented covariate vector ``(1, x_1, ..., x_d)``."""
    raw = np.asarray(values, dtype=float).reshape(-1)
    if not np.all(np.isfinite(raw)):
        raise DatasetError("non-finite covariate")
    return np.concatenate(([1.0], raw))


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """Observations ``(x_i, z_i)`` with intercept-augmented rows and optional case weights.

    ``X`` has shape ``(n, d+1)`` with a first column of ones; ``z`` holds 0/1
    outcomes. ``weights`` is ``None`` for the plain likelihood.
    """

    X: np.ndarray
    z: np.ndarray
    weights: np.ndarray | None = None

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        z = np.asarray(self.z, dtype=float)
        if X.ndim != 2 or X.shape[0] == 0:
            raise DatasetError("empty dataset")
        if X.shape[1] < 1 or not np.all(X[:, 0] == 1.0):
            raise DatasetError("first covariate column must be the intercept 1")
        if not np.all(np.isfinite(X)):
            raise DatasetError("non-finite covariate")
        if z.shape != (X.shape[0],):
            raise DimensionError("z must have one entry per row of X")
        if not np.all((z == 0.0) | (z == 1.0)):
            raise DatasetError("non-binary outcome")
        object.__setattr__(self, "X", _frozen(X))
        object.__setattr__(self, "z", _frozen(z))
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float)
            if w.shape != z.shape:
                raise DimensionError("weights must have one entry per observation")
            if not np.all(np.isfinite(w)) or np.any(w < 0):
                raise DatasetError("weights must be finite and nonnegative")
            if not np.any(w > 0):
                raise DatasetError("at least one weight must be positive")
            object.__setattr__(self, "weights", _frozen(w))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        """Number of covariates, excluding the intercept."""
        return self.X.shape[1] - 1

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def covariates(self) -> np.ndarray:
        """Raw covariates without the intercept column, shape ``(n, d)``."""
        return self.X[:, 1:]

    def case_weights(self) -> np.ndarray:
        return np.ones(self.n) if self.weights is None else self.weights

    def with_weights(self, weights) -> "Dataset":
        return Dataset(self.X, self.z, weights)

    def with_outcomes(self, z) -> "Dataset":
        return Dataset(self.X, z, self.weights)

    def take(self, index) -> "Dataset":
        w = None if self.weights is None else self.weights[index]
        return Dataset(self.X[index], self.z[index], w)

    @classmethod
    def from_arrays(cls, covariates, z, weights=None) -> "Dataset":
        """Build from raw covariates (no intercept column); 1-d input means ``d = 1``."""
        cov = np.asarray(covariates, dtype=float)
        if cov.ndim == 1:
            cov = cov[:, None]
        if cov.ndim != 2:
            raise DimensionError("covariates must be 1-d or 2-d")
        X = np.column_stack([np.ones(cov.shape[0]), cov]) if cov.shape[0] else np.empty((0, 1))
        return cls(X, z, weights)


def validate_dataset(rows: Iterable[Sequence[float]], weights=None) -> Dataset:
    """Turn raw rows ``(x_1, ..., x_d, z)`` into a :class:`Dataset`."""
    rows = [tuple(r) for r in rows]
    if not rows:
        raise DatasetError("empty dataset")
    width = len(rows[0])
    if width < 1:
        raise DatasetError("row without outcome")
    for i, r in enumerate(rows):
        if len(r) != width:
            raise DatasetError(f"inconsistent dimensions at row {i}: {len(r)} fields, expected {width}")
    try:
        arr = np.array(rows, dtype=float)
    except (TypeError, ValueError) as exc:
        raise DatasetError(f"non-numeric field: {exc}") from None
    z = arr[:, -1]
    bad = ~((z == 0.0) | (z == 1.0))
    if np.any(bad):
        raise DatasetError(f"non-binary outcome at row {int(np.argmax(bad))}")
    if not np.all(np.isfinite(arr[:, :-1])):
        raise DatasetError("non-finite covariate")
    return Dataset.from_arrays(arr[:, :-1].reshape(len(rows), width - 1), z, weights)


def read_csv(path: str | Path) -> Dataset:
    """Read a dataset with header ``x1,...,xd,z``; the intercept is added here."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DatasetError("empty dataset") from None
        if not header or header[-1] != "z":
            raise DatasetError("last header column must be 'z'")
        rows = []
        for lineno, rec in enumerate(reader, start=2):
            if not rec or all(not f.strip() for f in rec):
                continue
            if len(rec) != len(header):
                raise DatasetError(f"line {lineno}: {len(rec)} fields, expected {len(header)}")
            try:
                rows.append([float(f) for f in rec])
            except ValueError:
                raise DatasetError(f"line {lineno}: non-numeric field") from None
    return validate_dataset(rows)


def write_csv(data: Dataset, path: str | Path) -> None:
    cols = [f"x{j}" for j in range(1, data.d + 1)] + ["z"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for x, z in zip(data.covariates, data.z):
            w.writerow([repr(float(v)) for v in x] + [int(z)])
