"""Evaluation metrics for predicted quantiles on (censored) test data."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .exceptions import DomainError, ShapeError, UndefinedMetricError
from .losses import QuantileGrid, checkmark

__all__ = [
    "EVAL_LEVELS",
    "METRIC_NAMES",
    "AVAILABILITY",
    "MetricReport",
    "tqmse",
    "uql",
    "undcal",
    "censdcal",
    "c_index",
    "evaluate",
]

EVAL_LEVELS = (0.1, 0.5, 0.9)
METRIC_NAMES = ("tqmse", "uql", "undcal", "censdcal", "c_index")
AVAILABILITY = {
    1: {"tqmse", "uql", "undcal", "censdcal", "c_index"},
    2: {"uql", "undcal", "censdcal", "c_index"},
    3: {"censdcal", "c_index"},
}


def _as_matrix(a, n_cols=None, name="pred"):
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2 or (n_cols is not None and a.shape[1] != n_cols):
        raise ShapeError(f"{name} has shape {a.shape}")
    return a


def tqmse(pred, truth) -> float:
    """Squared error to the true quantiles, summed over columns, divided by N."""
    pred = _as_matrix(pred)
    truth = _as_matrix(truth, name="truth")
    if pred.shape != truth.shape:
        raise ShapeError(f"pred {pred.shape} vs truth {truth.shape}")
    return float(np.sum((pred - truth) ** 2) / len(pred))


def uql(pred, y, taus=EVAL_LEVELS) -> float:
    """Pinball loss on uncensored targets, summed over levels, divided by N."""
    pred = _as_matrix(pred, len(taus))
    y = np.asarray(y, dtype=float).ravel()
    if len(y) != len(pred):
        raise ShapeError("pred and y lengths differ")
    return float(np.sum(checkmark(y[:, None], pred, np.asarray(taus)[None, :])) / len(y))


def _bin_hits(pred, y):
    # hits[i, j] = pred[i, j] < y[i] <= pred[i, j+1]; rows are not re-sorted
    yc = y[:, None]
    return (pred[:, :-1] < yc) & (yc <= pred[:, 1:])


def undcal(pred, y, taus) -> float:
    taus = np.asarray(taus, dtype=float)
    pred = _as_matrix(pred, len(taus))
    y = np.asarray(y, dtype=float).ravel()
    if len(y) != len(pred):
        raise ShapeError("pred and y lengths differ")
    mass = _bin_hits(pred, y).mean(axis=0)
    return float(100.0 * np.sum((np.diff(taus) - mass) ** 2))


def censdcal(pred, y, delta, q_hat, taus) -> float:
    """D-calibration with censored rows spread over the bins above them.

    ``q_hat`` holds one estimated quantile level per censored row, in row
    order.
    """
    taus = np.asarray(taus, dtype=float)
    pred = _as_matrix(pred, len(taus))
    y = np.asarray(y, dtype=float).ravel()
    delta = np.asarray(delta).ravel()
    n = len(y)
    if len(delta) != n or len(pred) != n:
        raise ShapeError("pred, y and delta lengths differ")
    cens = delta == 0
    q = np.asarray(q_hat, dtype=float).ravel()
    if len(q) != int(cens.sum()):
        raise ShapeError(f"q_hat has {len(q)} entries for {int(cens.sum())} censored rows")
    if np.any(q >= 1.0) or np.any(q < 0.0):
        raise DomainError("q_hat must lie in [0, 1)")
    hits = _bin_hits(pred, y)
    xi = hits[~cens].sum(axis=0).astype(float)
    if cens.any():
        lo, hi = taus[:-1][None, :], taus[1:][None, :]
        qc = q[:, None]
        inside = hits[cens] * (hi - qc) / (1.0 - qc)
        above = (qc < lo) * (hi - lo) / (1.0 - qc)
        xi = xi + inside.sum(axis=0) + above.sum(axis=0)
    return float(100.0 * np.sum((np.diff(taus) - xi / n) ** 2))


def c_index(pred_median, y, delta) -> float:
    """Harrell's concordance over pairs with ``y_i < y_j`` and ``delta_i = 1``.

    Raises ``UndefinedMetricError`` when there is no comparable pair.
    """
    p = np.asarray(pred_median, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    d = np.asarray(delta).ravel()
    if not (len(p) == len(y) == len(d)):
        raise ShapeError("pred_median, y and delta lengths differ")
    if len(y) < 2:
        raise UndefinedMetricError("c-index needs at least two rows")
    order = np.argsort(y, kind="stable")
    p, y, d = p[order], y[order], d[order]
    comparable = 0
    score = 0.0
    chunk = max(1, 2_000_000 // len(y))
    for start in range(0, len(y), chunk):
        sl = slice(start, start + chunk)
        ev = d[sl] == 1
        if not ev.any():
            continue
        yi, pi = y[sl][ev][:, None], p[sl][ev][:, None]
        later = y[None, :] > yi
        comparable += int(later.sum())
        score += float(np.sum(later & (pi < p[None, :])))
        score += 0.5 * float(np.sum(later & (pi == p[None, :])))
    if comparable == 0:
        raise UndefinedMetricError("no comparable pairs")
    return score / comparable


@dataclass
class MetricReport:
    """Metric values for one (dataset, method, seed) cell; ``None`` marks a
    metric that is unavailable for the dataset type or undefined."""

    dataset: str
    method: str
    seed: int
    grid: tuple = ()
    tqmse: Optional[float] = None
    uql: Optional[float] = None
    undcal: Optional[float] = None
    censdcal: Optional[float] = None
    c_index: Optional[float] = None
    status: str = "ok"
    extra: dict = field(default_factory=dict)

    def values(self):
        return {m: getattr(self, m) for m in METRIC_NAMES}

    def to_row(self):
        def fmt(v):
            if v is None:
                return ""
            return repr(float(v))

        row = {"dataset": self.dataset, "method": self.method, "seed": str(self.seed),
               "status": self.status, "grid_size": str(len(self.grid))}
        row.update({m: fmt(getattr(self, m)) for m in METRIC_NAMES})
        for k, v in self.extra.items():
            row[k] = v if isinstance(v, str) else fmt(v)
        return row


def evaluate(model, test, dataset_type: int, dataset: str = "", seed: int = 0) -> MetricReport:
    """Compute the metrics available for ``dataset_type`` (1, 2 or 3).

    Censored metrics use the test set's observed ``labels``/``indicators``;
    UQL and UnDCal use ``true_targets``. Each censored row's level for
    CensDCal is the model's own nearest-prediction estimate.
    """
    from .algorithms import estimate_censored_quantiles

    if dataset_type not in AVAILABILITY:
        raise DomainError("dataset_type must be 1, 2 or 3")
    grid: QuantileGrid = model.grid
    taus = grid.taus
    pred = model.predict(test.features)
    rep = MetricReport(dataset or test.name, model.method, seed, tuple(grid.levels))
    avail = AVAILABILITY[dataset_type]
    if avail & {"tqmse", "uql"}:
        cols = grid.indices_of(EVAL_LEVELS)
        p3 = pred[:, cols]
    if "tqmse" in avail and test.true_quantile_fn is not None:
        truth = np.stack([test.true_quantile_fn(test.features, t) for t in EVAL_LEVELS], axis=1)
        rep.tqmse = tqmse(p3, truth)
    if test.true_targets is not None:
        if "uql" in avail:
            rep.uql = uql(p3, test.true_targets)
        if "undcal" in avail:
            rep.undcal = undcal(pred, test.true_targets, taus)
    cens = test.censored
    q = estimate_censored_quantiles(pred[cens], test.labels[cens], grid)
    rep.censdcal = censdcal(pred, test.labels, test.indicators, q, taus)
    try:
        med = pred[:, grid.index_of(0.5)]
        rep.c_index = c_index(med, test.labels, test.indicators)
    except UndefinedMetricError:
        rep.c_index = None
    for m in METRIC_NAMES:
        v = getattr(rep, m)
        if v is not None and not math.isfinite(v):
            rep.extra.setdefault("nonfinite", m)
    return rep
