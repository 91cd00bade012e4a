"""Censored datasets: representation, CSV I/O, splitting and standardization."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .exceptions import (
    DataError,
    DataValidationError,
    ParseError,
    SchemaError,
)

__all__ = [
    "CensoredDataset",
    "SplitConfig",
    "Standardizer",
    "load_csv",
    "save_csv",
    "split",
    "standardize_fit",
    "standardize_apply",
]


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class CensoredDataset:
    """Right-censored regression data.

    ``indicators[i] == 1`` means ``labels[i]`` is the observed target,
    ``0`` means the target is only known to exceed ``labels[i]``.
    Synthetic data additionally carries the uncensored ``true_targets`` and,
    for generated data, ``true_quantile_fn(X, tau)`` giving analytic quantiles.
    """

    features: np.ndarray
    labels: np.ndarray
    indicators: np.ndarray
    true_targets: Optional[np.ndarray] = None
    true_quantile_fn: Optional[Callable] = field(default=None, repr=False)
    name: str = ""

    def __post_init__(self):
        x = np.asarray(self.features, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if x.ndim != 2:
            raise DataError("features must be an N x D matrix")
        y = np.asarray(self.labels, dtype=float).ravel()
        d = np.asarray(self.indicators).ravel()
        if not (len(x) == len(y) == len(d)):
            raise DataError(
                f"length mismatch: features {len(x)}, labels {len(y)}, indicators {len(d)}"
            )
        if not np.all((d == 0) | (d == 1)):
            raise DataValidationError("indicators must be 0 or 1")
        object.__setattr__(self, "features", _frozen(x))
        object.__setattr__(self, "labels", _frozen(y))
        object.__setattr__(self, "indicators", _frozen(d, dtype=np.int8))
        if self.true_targets is not None:
            t = np.asarray(self.true_targets, dtype=float).ravel()
            if len(t) != len(y):
                raise DataError("true_targets length mismatch")
            obs = d == 1
            if np.any(y[obs] != t[obs]) or np.any(y[~obs] >= t[~obs]):
                raise DataError("true_targets inconsistent with labels and indicators")
            object.__setattr__(self, "true_targets", _frozen(t))

    def __len__(self):
        return len(self.labels)

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def censored(self) -> np.ndarray:
        return self.indicators == 0

    @property
    def n_censored(self) -> int:
        return int(np.sum(self.indicators == 0))

    @property
    def n_observed(self) -> int:
        return int(np.sum(self.indicators == 1))

    @property
    def censored_fraction(self) -> float:
        return self.n_censored / len(self) if len(self) else 0.0

    def subset(self, idx) -> "CensoredDataset":
        idx = np.asarray(idx)
        return replace(
            self,
            features=self.features[idx],
            labels=self.labels[idx],
            indicators=self.indicators[idx],
            true_targets=None if self.true_targets is None else self.true_targets[idx],
        )

    def with_features(self, features) -> "CensoredDataset":
        return replace(self, features=features)


# --------------------------------------------------------------------------
# CSV


def save_csv(ds: CensoredDataset, path, include_true_targets: bool = True) -> None:
    """Write ``x1..xD,y,delta`` (plus ``t`` when true targets are known)."""
    path = Path(path)
    header = [f"x{k + 1}" for k in range(ds.n_features)] + ["y", "delta"]
    with_t = include_true_targets and ds.true_targets is not None
    if with_t:
        header.append("t")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(len(ds)):
            row = [repr(float(v)) for v in ds.features[i]]
            row += [repr(float(ds.labels[i])), str(int(ds.indicators[i]))]
            if with_t:
                row.append(repr(float(ds.true_targets[i])))
            w.writerow(row)


def load_csv(
    path,
    feature_columns: Optional[Sequence[str]] = None,
    label_column: str = "y",
    indicator_column: str = "delta",
    true_target_column: Optional[str] = "t",
) -> CensoredDataset:
    """Read a dataset from CSV with a header row.

    By default every column named ``x<k>`` is a feature. Errors name the
    1-based data row (the header is not counted).
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    rows = [r for r in rows if r and any(c.strip() for c in r)]
    if not rows:
        raise DataValidationError(f"{path}: no rows")
    header = [h.strip() for h in rows[0]]
    body = rows[1:]
    if not body:
        raise DataValidationError(f"{path}: no rows")
    if feature_columns is None:
        feature_columns = [h for h in header if h.startswith("x") and h[1:].isdigit()]
        feature_columns.sort(key=lambda h: int(h[1:]))
        if not feature_columns:
            raise SchemaError(f"{path}: no feature columns (x1, x2, ...)")
    for col in list(feature_columns) + [label_column, indicator_column]:
        if col not in header:
            raise SchemaError(f"{path}: missing column {col!r}")
    fidx = [header.index(c) for c in feature_columns]
    yidx = header.index(label_column)
    didx = header.index(indicator_column)
    tidx = header.index(true_target_column) if true_target_column in header else None

    n = len(body)
    x = np.empty((n, len(fidx)))
    y = np.empty(n)
    d = np.empty(n, dtype=np.int8)
    t = np.empty(n) if tidx is not None else None
    for r, row in enumerate(body, start=1):
        if len(row) != len(header):
            raise ParseError(f"{path}: row {r} has {len(row)} fields, expected {len(header)}")
        try:
            x[r - 1] = [float(row[k]) for k in fidx]
            y[r - 1] = float(row[yidx])
            dv = float(row[didx])
            if t is not None:
                t[r - 1] = float(row[tidx])
        except ValueError as exc:
            raise ParseError(f"{path}: row {r}: non-numeric cell ({exc})") from None
        if dv not in (0.0, 1.0):
            raise DataValidationError(
                f"{path}: row {r}: indicator must be 0 or 1, got {row[didx].strip()}"
            )
        d[r - 1] = int(dv)
    return CensoredDataset(x, y, d, true_targets=t, name=path.stem)


# --------------------------------------------------------------------------
# splitting


@dataclass(frozen=True)
class SplitConfig:
    test_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.test_fraction < 1:
            raise DataError("test_fraction must lie in (0, 1)")


def split(ds: CensoredDataset, cfg: SplitConfig = SplitConfig()):
    """Random train/test partition with ``floor(N * (1 - f))`` training rows."""
    n = len(ds)
    if n < 2:
        raise DataError("need at least 2 rows to split")
    n_train = int(math.floor(n * (1.0 - cfg.test_fraction)))
    if n_train < 1 or n_train >= n:
        raise DataError(f"split of {n} rows at fraction {cfg.test_fraction} leaves an empty side")
    perm = np.random.default_rng(cfg.seed).permutation(n)
    return ds.subset(np.sort(perm[:n_train])), ds.subset(np.sort(perm[n_train:]))


# --------------------------------------------------------------------------
# standardization


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    std: np.ndarray

    def transform(self, x):
        x = np.asarray(x, dtype=float)
        centred = x - self.mean
        safe = np.where(self.std > 0, self.std, 1.0)
        return np.where(self.std > 0, centred / safe, 0.0)

    def to_dict(self):
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["mean"], dtype=float), np.asarray(d["std"], dtype=float))

    @classmethod
    def identity(cls, dim):
        return cls(np.zeros(dim), np.ones(dim))


def standardize_fit(train: CensoredDataset) -> Standardizer:
    # population (1/N) std
    return Standardizer(train.features.mean(axis=0), train.features.std(axis=0))


def standardize_apply(scaler: Standardizer, ds: CensoredDataset) -> CensoredDataset:
    return ds.with_features(scaler.transform(ds.features))
