"""Training procedures for censored quantile regression networks.

* ``train_cqrnn``: one multi-head network; censored quantiles are re-estimated
  from the current outputs on every minibatch (hard E-step) before the
  re-weighted pinball gradient step.
* ``train_sequential_grid``: one single-output network per grid level, trained
  in increasing order, with censored weights updated from crossing events.
* ``train_excl_censor``: multi-head pinball loss on observed rows only.
* ``train_lognorm_mle``: two-head log-normal likelihood baseline.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .data import CensoredDataset, Standardizer, standardize_fit
from .distributions import normal_ppf
from .exceptions import ConfigurationError, DataError, TrainingError, UsageError
from .losses import (
    PseudoValue,
    QuantileGrid,
    crossing_penalty,
    lognorm_censored_nll,
    monotone_heads,
    softplus,
)
from .nn import MLP, Adam, NetConfig

__all__ = [
    "TrainConfig",
    "TrainedQuantileModel",
    "estimate_censored_quantiles",
    "train_cqrnn",
    "train_sequential_grid",
    "train_excl_censor",
    "train_lognorm_mle",
    "train",
    "predict",
    "METHODS",
]

CROSSING_RULES = ("conventional", "printed")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 128
    lr: float = 0.01
    weight_decay: float = 1e-4
    lr_drop_points: tuple = (0.7, 0.9)
    lr_drop_factor: float = 0.1
    hidden_sizes: tuple = (100, 100)
    activation: str = "relu"
    dropout: bool = False
    dropout_rate: float = 0.5
    grid: QuantileGrid = field(default_factory=lambda: QuantileGrid.even(9))
    pseudo: PseudoValue = field(default_factory=PseudoValue)
    seed: int = 0
    standardize: bool = True
    crossing_weight: float = 0.0
    crossing_margin: float = 0.0
    monotone: bool = False
    interpolate_q: bool = False
    crossing_rule: str = "conventional"
    nonpositive_labels: str = "raise"

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigurationError("epochs and batch_size must be >= 1")
        if self.crossing_rule not in CROSSING_RULES:
            raise ConfigurationError(f"crossing_rule must be one of {CROSSING_RULES}")
        if self.nonpositive_labels not in ("raise", "clip"):
            raise ConfigurationError("nonpositive_labels must be 'raise' or 'clip'")
        if not isinstance(self.grid, QuantileGrid):
            object.__setattr__(self, "grid", QuantileGrid(tuple(self.grid)))
        if not isinstance(self.pseudo, PseudoValue):
            object.__setattr__(self, "pseudo", PseudoValue(float(self.pseudo)))
        object.__setattr__(self, "hidden_sizes", tuple(self.hidden_sizes))
        object.__setattr__(self, "lr_drop_points", tuple(self.lr_drop_points))

    def replace(self, **kw) -> "TrainConfig":
        return replace(self, **kw)

    def net_config(self, input_dim: int, n_outputs: int) -> NetConfig:
        return NetConfig(input_dim, n_outputs, self.hidden_sizes, self.activation,
                         self.dropout, self.dropout_rate)

    def to_dict(self):
        d = asdict(self)
        d["grid"] = list(self.grid.levels)
        d["pseudo"] = self.pseudo.factor
        d["hidden_sizes"] = list(self.hidden_sizes)
        d["lr_drop_points"] = list(self.lr_drop_points)
        return d

    @classmethod
    def from_dict(cls, d) -> "TrainConfig":
        d = dict(d)
        if "grid" in d and not isinstance(d["grid"], QuantileGrid):
            d["grid"] = QuantileGrid(tuple(d["grid"]))
        if "pseudo" in d and not isinstance(d["pseudo"], PseudoValue):
            d["pseudo"] = PseudoValue(float(d["pseudo"]))
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigurationError(f"unknown training options: {sorted(unknown)}")
        return cls(**d)


@dataclass
class TrainedQuantileModel:
    method: str
    grid: QuantileGrid
    nets: list
    scaler: Standardizer
    y_star: Optional[float] = None
    n_levels_trained: Optional[int] = None
    monotone: bool = False
    history: list = field(default_factory=list)
    train_seconds: float = 0.0

    @property
    def n_params(self) -> int:
        return sum(net.n_params for net in self.nets)

    def _inputs(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        return self.scaler.transform(x)

    def lognorm_params(self, x):
        """``(mu, sigma)`` of the predicted log-normal (lognorm models only)."""
        if self.method != "lognorm":
            raise UsageError("lognorm_params is only defined for lognorm models")
        out, _ = self.nets[0].forward(self._inputs(x))
        return out[:, 0], softplus(out[:, 1])

    def predict(self, x) -> np.ndarray:
        """Quantile predictions, one column per grid level."""
        z = self._inputs(x)
        if self.method == "lognorm":
            mu, sigma = self.lognorm_params(x)
            with np.errstate(over="ignore"):
                return np.exp(mu[:, None] + sigma[:, None] * normal_ppf(self.grid.taus)[None, :])
        if self.method == "seqgrid":
            cols = [net.forward(z)[0][:, 0] for net in self.nets]
            while len(cols) < len(self.grid):
                cols.append(cols[-1])
            return np.stack(cols, axis=1)
        out, _ = self.nets[0].forward(z)
        if self.monotone:
            out, _ = monotone_heads(out)
        return out

    # -- checkpoints --------------------------------------------------------

    def to_dict(self):
        return {
            "format": "cqrnn-model",
            "version": 1,
            "method": self.method,
            "grid": list(self.grid.levels),
            "scaler": self.scaler.to_dict(),
            "y_star": self.y_star,
            "n_levels_trained": self.n_levels_trained,
            "monotone": self.monotone,
            "train_seconds": self.train_seconds,
            "nets": [net.to_dict() for net in self.nets],
        }

    @classmethod
    def from_dict(cls, d) -> "TrainedQuantileModel":
        if d.get("format") != "cqrnn-model":
            raise UsageError("not a cqrnn model checkpoint")
        return cls(
            method=d["method"],
            grid=QuantileGrid(tuple(d["grid"])),
            nets=[MLP.from_dict(n) for n in d["nets"]],
            scaler=Standardizer.from_dict(d["scaler"]),
            y_star=d.get("y_star"),
            n_levels_trained=d.get("n_levels_trained"),
            monotone=d.get("monotone", False),
            train_seconds=d.get("train_seconds", 0.0),
        )

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "TrainedQuantileModel":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def write_history(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            if self.method == "seqgrid":
                fh.write("level,epoch,loss,lr\n")
                for level, epoch, loss, lr in self.history:
                    fh.write(f"{level},{epoch},{loss!r},{lr!r}\n")
            else:
                fh.write("epoch,loss,lr\n")
                for epoch, loss, lr in self.history:
                    fh.write(f"{epoch},{loss!r},{lr!r}\n")


def predict(model: TrainedQuantileModel, x) -> np.ndarray:
    return model.predict(x)


# --------------------------------------------------------------------------
# hard E-step


def estimate_censored_quantiles(pred, y, grid, interpolate: bool = False) -> np.ndarray:
    """Grid level whose prediction is nearest each censored label.

    ``pred`` is ``(N_c, M)``. Ties go to the lower level. With
    ``interpolate`` the level is linearly interpolated between the nearest
    prediction and its neighbour on the far side of ``y``.
    """
    taus = grid.taus if isinstance(grid, QuantileGrid) else np.asarray(grid, dtype=float)
    pred = np.asarray(pred, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if pred.ndim == 1:
        pred = pred[:, None]
    k = np.argmin(np.abs(pred - y[:, None]), axis=1)
    q = taus[k]
    if not interpolate or len(taus) < 2:
        return q
    rows = np.arange(len(y))
    pk = pred[rows, k]
    step = np.where(pk < y, 1, -1)
    nb = np.clip(k + step, 0, len(taus) - 1)
    pn = pred[rows, nb]
    denom = pn - pk
    ok = (nb != k) & (denom != 0)
    frac = np.where(ok, (y - pk) / np.where(ok, denom, 1.0), 0.0)
    frac = np.clip(frac, 0.0, 1.0)
    return q + frac * (taus[nb] - q)


# --------------------------------------------------------------------------
# shared minibatch loop


def _streams(seed):
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    init_ss, shuffle_ss, drop_ss = ss.spawn(3)
    return init_ss, np.random.default_rng(shuffle_ss), np.random.default_rng(drop_ss)


def _fit(net: MLP, x, cfg: TrainConfig, loss_grad, shuffle_rng, drop_rng, history, tag=None):
    n = len(x)
    bs = cfg.batch_size
    steps_per_epoch = math.ceil(n / bs)
    opt = Adam(lr=cfg.lr, weight_decay=cfg.weight_decay, drop_points=cfg.lr_drop_points,
               drop_factor=cfg.lr_drop_factor, total_steps=cfg.epochs * steps_per_epoch)
    params = net.params
    for epoch in range(cfg.epochs):
        perm = shuffle_rng.permutation(n)
        total = 0.0
        for start in range(0, n, bs):
            idx = perm[start:start + bs]
            out, cache = net.forward(x[idx], train=True, rng=drop_rng)
            loss, g = loss_grad(out, idx)
            if not math.isfinite(loss) or not np.all(np.isfinite(g)):
                raise TrainingError(f"non-finite loss at step {opt.step_count + 1}",
                                    step=opt.step_count + 1)
            opt.step(params, net.backward(cache, g))
            net.touch()
            total += loss * len(idx)
        row = (epoch + 1, total / n, opt.lr_at(opt.step_count))
        history.append(row if tag is None else (tag, *row))


def _prepare(ds: CensoredDataset, cfg: TrainConfig):
    if len(ds) == 0:
        raise DataError("empty training set")
    scaler = standardize_fit(ds) if cfg.standardize else Standardizer.identity(ds.n_features)
    return scaler, scaler.transform(ds.features)


def _multihead_loss_grad(y, censored, taus, y_star, cfg: TrainConfig):
    """Per-batch mean loss/gradient: pinball for observed rows, re-weighted
    pinball with a fresh hard E-step for censored rows."""
    interpolate = cfg.interpolate_q
    cw, margin, mono = cfg.crossing_weight, cfg.crossing_margin, cfg.monotone

    def loss_grad(raw, idx):
        if mono:
            out, back = monotone_heads(raw)
        else:
            out = raw
        yb = y[idx][:, None]
        above = out > yb
        loss = (yb - out) * (taus - above)
        grad = above - taus
        cb = censored[idx]
        if cb.any():
            yh = out[cb]
            yj = yb[cb]
            k = np.argmin(np.abs(yh - yj), axis=1)
            if interpolate:
                q = estimate_censored_quantiles(yh, yj[:, 0], taus, True)
            else:
                q = taus[k]
            q = q[:, None]
            w = np.maximum((taus - q) / (1.0 - q), 0.0)
            loss[cb] = w * ((yj - yh) * (taus - (yh > yj))) + (1.0 - w) * (
                (y_star - yh) * (taus - (yh > y_star)))
            grad[cb] = np.where(yh < yj, -taus, np.where(yh < y_star, w - taus, 1.0 - taus))
        b = len(idx)
        total = loss.sum() / b
        grad = grad / b
        if cw:
            pl, pg = crossing_penalty(out, margin)
            total += cw * pl / b
            grad = grad + cw * pg / b
        if mono:
            grad = back(grad)
        return float(total), grad

    return loss_grad


def _train_multihead(ds, cfg, method, y_star):
    t0 = time.perf_counter()
    scaler, x = _prepare(ds, cfg)
    taus = cfg.grid.taus
    init_ss, shuffle_rng, drop_rng = _streams(cfg.seed)
    net = MLP.init(cfg.net_config(ds.n_features, len(taus)), init_ss)
    history = []
    loss_grad = _multihead_loss_grad(ds.labels, ds.censored, taus, y_star, cfg)
    _fit(net, x, cfg, loss_grad, shuffle_rng, drop_rng, history)
    return TrainedQuantileModel(method, cfg.grid, [net], scaler, y_star=y_star,
                                monotone=cfg.monotone, history=history,
                                train_seconds=time.perf_counter() - t0)


def train_cqrnn(ds: CensoredDataset, cfg: TrainConfig = TrainConfig()) -> TrainedQuantileModel:
    y_star = cfg.pseudo.resolve(ds.labels)
    return _train_multihead(ds, cfg, "cqrnn", y_star)


def train_excl_censor(ds: CensoredDataset, cfg: TrainConfig = TrainConfig()) -> TrainedQuantileModel:
    if ds.n_observed == 0:
        raise DataError("every row is censored; nothing left to train on")
    kept = ds.subset(np.flatnonzero(ds.indicators == 1))
    return _train_multihead(kept, cfg, "excl", None)


# --------------------------------------------------------------------------
# sequential grid


def _single_level_loss_grad(y, censored, w_full, tau, y_star):
    def loss_grad(out, idx):
        yb = y[idx][:, None]
        above = out > yb
        loss = (yb - out) * (tau - above)
        grad = above - tau
        cb = censored[idx]
        if cb.any():
            yh = out[cb]
            yj = yb[cb]
            w = w_full[idx][cb][:, None]
            loss[cb] = w * ((yj - yh) * (tau - (yh > yj))) + (1.0 - w) * (
                (y_star - yh) * (tau - (yh > y_star)))
            grad[cb] = np.where(yh < yj, -tau, np.where(yh < y_star, w - tau, 1.0 - tau))
        b = len(idx)
        return float(loss.sum() / b), grad / b

    return loss_grad


def _crossed(cur, before, y, rule):
    if rule == "conventional":
        return (cur >= y) & (before < y)
    return (cur <= y) & (before > y)


def train_sequential_grid(ds: CensoredDataset, cfg: TrainConfig = TrainConfig()) -> TrainedQuantileModel:
    """One network per grid level, fitted in increasing order.

    The first level uses ``q = 0`` for every censored row. Before each later
    level, censored rows whose prediction crossed their label between the two
    most recent levels get ``q`` set to the most recent level; rows never
    crossed get ``q = tau`` (weight zero). Training stops early once no
    observed label lies above the latest level's predictions; remaining
    levels reuse that prediction.
    """
    t0 = time.perf_counter()
    scaler, x = _prepare(ds, cfg)
    taus = cfg.grid.taus
    y = ds.labels
    censored = ds.censored
    observed = ~censored
    yc = y[censored]
    y_star = cfg.pseudo.resolve(y)
    level_seeds = np.random.SeedSequence(cfg.seed).spawn(len(taus))
    net_cfg = cfg.net_config(ds.n_features, 1)

    q = np.zeros(int(censored.sum()))
    ever_crossed = np.zeros(len(q), dtype=bool)
    pred_before = np.full(len(q), -np.inf)
    nets, history = [], []
    for i, tau in enumerate(taus):
        if i > 0:
            latest = nets[-1].forward(x)[0][:, 0]
            if not np.any(y[observed] > latest[observed]):
                break
            cur = latest[censored]
            k = _crossed(cur, pred_before, yc, cfg.crossing_rule)
            q[k] = taus[i - 1]
            ever_crossed |= k
            q[~ever_crossed] = tau
            pred_before = cur
        w_full = np.zeros(len(y))
        w_full[censored] = np.maximum((tau - q) / (1.0 - q), 0.0)
        init_ss, shuffle_rng, drop_rng = _streams(level_seeds[i])
        net = MLP.init(net_cfg, init_ss)
        _fit(net, x, cfg, _single_level_loss_grad(y, censored, w_full, tau, y_star),
             shuffle_rng, drop_rng, history, tag=i)
        nets.append(net)
    return TrainedQuantileModel("seqgrid", cfg.grid, nets, scaler, y_star=y_star,
                                n_levels_trained=len(nets), history=history,
                                train_seconds=time.perf_counter() - t0)


# --------------------------------------------------------------------------
# log-normal likelihood baseline


def train_lognorm_mle(ds: CensoredDataset, cfg: TrainConfig = TrainConfig()) -> TrainedQuantileModel:
    """Two-head network for ``log y ~ N(mu, softplus(s)^2)``.

    Non-positive labels raise ``DataError`` unless
    ``cfg.nonpositive_labels == "clip"``, which lifts them to half the
    smallest positive label.
    """
    t0 = time.perf_counter()
    y = np.array(ds.labels, dtype=float)
    bad = y <= 0
    if bad.any():
        if cfg.nonpositive_labels != "clip":
            raise DataError(f"{int(bad.sum())} non-positive labels; log-normal needs y > 0")
        if bad.all():
            raise DataError("no positive labels")
        y[bad] = 0.5 * y[~bad].min()
    delta = ds.indicators
    scaler, x = _prepare(ds, cfg)
    init_ss, shuffle_rng, drop_rng = _streams(cfg.seed)
    net = MLP.init(cfg.net_config(ds.n_features, 2), init_ss)

    def loss_grad(out, idx):
        loss, d_mu, d_s = lognorm_censored_nll(out[:, 0], out[:, 1], y[idx], delta[idx], "mean")
        return loss, np.stack([d_mu, d_s], axis=1)

    history = []
    _fit(net, x, cfg, loss_grad, shuffle_rng, drop_rng, history)
    return TrainedQuantileModel("lognorm", cfg.grid, [net], scaler, history=history,
                                train_seconds=time.perf_counter() - t0)


METHODS = {
    "cqrnn": train_cqrnn,
    "seqgrid": train_sequential_grid,
    "excl": train_excl_censor,
    "lognorm": train_lognorm_mle,
}


def train(method: str, ds: CensoredDataset, cfg: TrainConfig = TrainConfig()) -> TrainedQuantileModel:
    try:
        fn = METHODS[method]
    except KeyError:
        raise ConfigurationError(f"unknown method {method!r}; choose from {', '.join(METHODS)}") from None
    return fn(ds, cfg)
