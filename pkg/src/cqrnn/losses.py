"""Quantile losses and their gradients with respect to network outputs.

Array conventions: predictions ``y_hat`` are ``(N, M)`` with one column per
quantile level; ``y`` and ``delta`` are length ``N``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, log_ndtr

from .exceptions import ConfigurationError, DataError, DomainError, ShapeError

__all__ = [
    "QuantileGrid",
    "PseudoValue",
    "CensoredWeights",
    "checkmark",
    "checkmark_grad",
    "portnoy_weight",
    "portnoy_loss",
    "portnoy_grad",
    "portnoy_loss_and_grad",
    "lognorm_censored_nll",
    "softplus",
    "crossing_penalty",
    "monotone_heads",
    "asymmetric_laplace_loglik",
]

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass(frozen=True)
class QuantileGrid:
    levels: tuple

    def __post_init__(self):
        lv = tuple(float(t) for t in self.levels)
        if not lv:
            raise ConfigurationError("grid must contain at least one level")
        if any(not 0.0 < t < 1.0 for t in lv):
            raise ConfigurationError("grid levels must lie in (0, 1)")
        if any(b <= a for a, b in zip(lv, lv[1:])):
            raise ConfigurationError("grid levels must be strictly increasing")
        object.__setattr__(self, "levels", lv)

    @classmethod
    def even(cls, m: int) -> "QuantileGrid":
        """Levels ``k / (m + 1)`` for ``k = 1..m``."""
        if m < 1:
            raise ConfigurationError("grid size must be >= 1")
        return cls(tuple(k / (m + 1) for k in range(1, m + 1)))

    def __len__(self):
        return len(self.levels)

    @property
    def taus(self) -> np.ndarray:
        return np.array(self.levels)

    def index_of(self, tau: float) -> int:
        for i, t in enumerate(self.levels):
            if abs(t - tau) < 1e-9:
                return i
        raise ConfigurationError(f"level {tau} is not in the grid {self.levels}")

    def indices_of(self, taus):
        return [self.index_of(t) for t in taus]


@dataclass(frozen=True)
class PseudoValue:
    """``y* = factor * max_i y_i``; ``factor`` must be at least 1."""

    factor: float = 1.2

    def __post_init__(self):
        if not self.factor >= 1.0:
            raise ConfigurationError("pseudo value factor must be >= 1")

    def resolve(self, labels) -> float:
        return self.factor * float(np.max(labels))


def _tau_ok(tau):
    tau = np.asarray(tau, dtype=float)
    if np.any(~((tau > 0) & (tau < 1))):
        raise DomainError("tau must lie in (0, 1)")
    return tau


def checkmark(y, y_hat, tau):
    """Pinball loss ``(y - y_hat) * (tau - 1[y_hat > y])``."""
    y = np.asarray(y, dtype=float)
    y_hat = np.asarray(y_hat, dtype=float)
    return (y - y_hat) * (tau - (y_hat > y))


def checkmark_grad(y, y_hat, tau):
    """Derivative w.r.t. ``y_hat``: ``1[y_hat > y] - tau`` (``-tau`` at ties)."""
    return (np.asarray(y_hat) > np.asarray(y)) - np.asarray(tau, dtype=float)


def portnoy_weight(tau, q_hat, clamp: bool = True):
    """Share of a censored point kept at its censored value.

    ``(tau - q) / (1 - q)``, clamped at zero for ``tau < q`` unless
    ``clamp`` is false.
    """
    q_hat = np.asarray(q_hat, dtype=float)
    if np.any(q_hat >= 1.0) or np.any(q_hat < 0.0):
        raise DomainError("q_hat must lie in [0, 1)")
    tau = _tau_ok(tau)
    w = (tau - q_hat) / (1.0 - q_hat)
    return np.maximum(w, 0.0) if clamp else w


@dataclass(frozen=True)
class CensoredWeights:
    """Estimated quantile per censored point and the implied weight per level."""

    q_hat: np.ndarray
    w: np.ndarray

    @classmethod
    def from_q_hat(cls, q_hat, grid: QuantileGrid, clamp: bool = True) -> "CensoredWeights":
        q_hat = np.asarray(q_hat, dtype=float)
        w = portnoy_weight(grid.taus[None, :], q_hat[:, None], clamp=clamp)
        return cls(q_hat, w)


def _weights_full(weights, censored, m):
    """Scatter per-censored weights into an ``(N, M)`` array."""
    w = weights.w if isinstance(weights, CensoredWeights) else np.asarray(weights, dtype=float)
    n = censored.shape[0]
    if w.shape == (n, m):
        return w
    n_c = int(censored.sum())
    if w.ndim == 1 and n_c and w.shape == (n_c,):
        w = np.repeat(w[:, None], m, axis=1)
    if w.shape != (n_c, m):
        raise ShapeError(f"weights have shape {w.shape}, expected ({n_c}, {m}) or ({n}, {m})")
    full = np.zeros((n, m))
    full[censored] = w
    return full


def _prep(y_hat, y, delta, taus):
    y_hat = np.asarray(y_hat, dtype=float)
    if y_hat.ndim == 1:
        y_hat = y_hat[:, None]
    taus = _tau_ok(np.atleast_1d(taus))
    y = np.asarray(y, dtype=float).ravel()
    delta = np.asarray(delta).ravel()
    if y_hat.shape != (len(y), len(taus)) or len(delta) != len(y):
        raise ShapeError(f"y_hat {y_hat.shape} does not match {len(y)} rows x {len(taus)} levels")
    return y_hat, y, delta, taus


def portnoy_loss_and_grad(y_hat, y, delta, taus, weights, y_star, reduction: str = "sum"):
    """Re-weighted pinball loss summed over levels, and its gradient.

    Each censored point contributes ``w * rho(y_j, .) + (1 - w) * rho(y*, .)``.
    With ``reduction="mean"`` the loss and gradient are divided by ``N``.
    Censored gradients follow the three-case table
    ``-tau | w - tau | 1 - tau`` split at ``y_j <= y_hat < y*``.
    """
    y_hat, y, delta, taus = _prep(y_hat, y, delta, taus)
    censored = delta == 0
    if censored.any() and y_star < np.max(y):
        raise ConfigurationError(f"y* = {y_star} is below max label {np.max(y)}")
    yc = y[:, None]
    above = y_hat > yc
    loss = (yc - y_hat) * (taus - above)
    grad = above - taus
    if censored.any():
        w = _weights_full(weights, censored, len(taus))[censored]
        yh = y_hat[censored]
        yj = y[censored][:, None]
        t = taus
        cens_loss = w * ((yj - yh) * (t - (yh > yj))) + (1.0 - w) * ((y_star - yh) * (t - (yh > y_star)))
        loss[censored] = cens_loss
        g = np.where(yh < yj, -t, np.where(yh < y_star, w - t, 1.0 - t))
        grad[censored] = g
    total = float(loss.sum())
    if reduction == "mean":
        n = len(y)
        return total / n, grad / n
    if reduction != "sum":
        raise ConfigurationError("reduction must be 'sum' or 'mean'")
    return total, grad


def portnoy_loss(y_hat, y, delta, taus, weights, y_star, reduction: str = "sum"):
    return portnoy_loss_and_grad(y_hat, y, delta, taus, weights, y_star, reduction)[0]


def portnoy_grad(y_hat, y, delta, taus, weights, y_star, reduction: str = "sum"):
    return portnoy_loss_and_grad(y_hat, y, delta, taus, weights, y_star, reduction)[1]


def softplus(x):
    return np.logaddexp(0.0, x)


def lognorm_censored_nll(mu, s_raw, y, delta, reduction: str = "sum"):
    """Censored log-normal negative log-likelihood.

    ``mu`` is the mean of ``log y``; the standard deviation is
    ``softplus(s_raw)``. Returns ``(loss, d_mu, d_s_raw)``.
    """
    mu = np.asarray(mu, dtype=float).ravel()
    s_raw = np.asarray(s_raw, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    delta = np.asarray(delta).ravel()
    if np.any(y <= 0):
        raise DataError("log-normal likelihood needs strictly positive labels")
    sigma = softplus(s_raw)
    ly = np.log(y)
    z = (ly - mu) / sigma
    obs = delta == 1
    nll = np.empty_like(z)
    d_mu = np.empty_like(z)
    d_sigma = np.empty_like(z)
    # observed: log y + log sigma + log sqrt(2 pi) + z^2 / 2
    zo, so = z[obs], sigma[obs]
    nll[obs] = ly[obs] + np.log(so) + _LOG_SQRT_2PI + 0.5 * zo * zo
    d_mu[obs] = -zo / so
    d_sigma[obs] = (1.0 - zo * zo) / so
    # censored: -log(1 - Phi(z)) = -log Phi(-z)
    zc, sc = z[~obs], sigma[~obs]
    log_surv = log_ndtr(-zc)
    nll[~obs] = -log_surv
    hazard = np.exp(-0.5 * zc * zc - _LOG_SQRT_2PI - log_surv)
    d_mu[~obs] = -hazard / sc
    d_sigma[~obs] = -hazard * zc / sc
    d_s = d_sigma * expit(s_raw)
    total = float(nll.sum())
    if reduction == "mean":
        n = len(y)
        return total / n, d_mu / n, d_s / n
    return total, d_mu, d_s


def crossing_penalty(y_hat, margin: float = 0.0):
    """Hinge ``sum max(0, margin - (y_hat[:, j+1] - y_hat[:, j]))`` and gradient."""
    y_hat = np.asarray(y_hat, dtype=float)
    gap = y_hat[:, 1:] - y_hat[:, :-1]
    viol = margin - gap
    active = viol > 0
    loss = float(np.sum(viol[active]))
    g = np.zeros_like(y_hat)
    a = active.astype(float)
    g[:, 1:] -= a
    g[:, :-1] += a
    return loss, g


def monotone_heads(raw):
    """Map raw outputs to non-decreasing columns via cumulative softplus.

    Returns ``(out, backward)`` where ``backward(g_out)`` gives the gradient
    w.r.t. ``raw``.
    """
    raw = np.asarray(raw, dtype=float)
    inc = softplus(raw[:, 1:])
    out = np.concatenate([raw[:, :1], raw[:, :1] + np.cumsum(inc, axis=1)], axis=1)

    def backward(g_out):
        tail = np.cumsum(g_out[:, ::-1], axis=1)[:, ::-1]
        g_raw = tail.copy()
        g_raw[:, 1:] *= expit(raw[:, 1:])
        return g_raw

    return out, backward


def asymmetric_laplace_loglik(y, y_hat, tau):
    """Log-density of an asymmetric Laplace located at ``y_hat``.

    Scale ``lam = sqrt(tau - tau^2)`` and asymmetry ``k = tau / lam``.
    """
    tau = _tau_ok(tau)
    y = np.asarray(y, dtype=float)
    y_hat = np.asarray(y_hat, dtype=float)
    lam = np.sqrt(tau - tau * tau)
    k = tau / lam
    log_norm = np.log(lam / (k + 1.0 / k))
    r = y - y_hat
    expo = np.where(y_hat > y, (lam / k) * r, -lam * k * r)
    out = log_norm + expo
    return out[()] if np.ndim(out) == 0 else out
