"""Five univariate distribution families with sampling, quantiles, densities.

Parameters may be scalars or numpy arrays; every function broadcasts
elementwise, which lets the dataset generators describe one distribution per
input row with a single ``DistSpec``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy.special import erfc

from .exceptions import DomainError, ParameterError

__all__ = [
    "DistSpec",
    "Normal",
    "LogNormal",
    "Exponential",
    "Weibull",
    "Uniform",
    "sample",
    "quantile",
    "log_pdf",
    "cdf",
    "normal_cdf",
    "normal_ppf",
]

FAMILIES = ("normal", "lognormal", "exponential", "weibull", "uniform")
_PARAM_NAMES = {
    "normal": ("mean", "std"),
    "lognormal": ("mu", "sigma"),
    "exponential": ("scale",),
    "weibull": ("scale", "shape"),
    "uniform": ("low", "high"),
}
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
_SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class DistSpec:
    """A distribution family together with its (possibly array) parameters.

    ``params`` maps the family's parameter names to values:

    ===========  ==================================
    normal       mean, std (std > 0)
    lognormal    mu, sigma: mean / std of log-values
    exponential  scale (the mean, not the rate)
    weibull      scale, shape
    uniform      low, high (low < high)
    ===========  ==================================
    """

    family: str
    params: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ParameterError(f"unknown distribution family {self.family!r}")
        expected = _PARAM_NAMES[self.family]
        if set(self.params) != set(expected):
            raise ParameterError(
                f"{self.family} expects parameters {expected}, got {tuple(self.params)}"
            )
        p = {k: np.asarray(v, dtype=float) for k, v in self.params.items()}
        for name, value in p.items():
            if not np.all(np.isfinite(value)):
                raise ParameterError(f"{self.family}.{name} must be finite")
        positive = {
            "normal": ("std",),
            "lognormal": ("sigma",),
            "exponential": ("scale",),
            "weibull": ("scale", "shape"),
            "uniform": (),
        }[self.family]
        for name in positive:
            if np.any(p[name] <= 0):
                raise ParameterError(f"{self.family}.{name} must be > 0")
        if self.family == "uniform" and np.any(p["low"] >= p["high"]):
            raise ParameterError("uniform requires low < high")
        object.__setattr__(self, "params", p)

    def __getitem__(self, name):
        return self.params[name]

    @property
    def shape(self):
        return np.broadcast_shapes(*(v.shape for v in self.params.values()))


def Normal(mean, std):
    return DistSpec("normal", {"mean": mean, "std": std})


def LogNormal(mu, sigma):
    return DistSpec("lognormal", {"mu": mu, "sigma": sigma})


def Exponential(scale):
    return DistSpec("exponential", {"scale": scale})


def Weibull(scale, shape):
    return DistSpec("weibull", {"scale": scale, "shape": shape})


def Uniform(low, high):
    return DistSpec("uniform", {"low": low, "high": high})


# --------------------------------------------------------------------------
# standard normal


def normal_cdf(z):
    """Standard normal CDF through the complementary error function."""
    return 0.5 * erfc(-np.asarray(z, dtype=float) / _SQRT2)


# Acklam's rational approximation, |rel. err| < 1.2e-9 before refinement.
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


def _ppf_lower(p):
    # p in (0, 0.5]; returns z <= 0
    z = np.empty_like(p)
    tail = p < _P_LOW
    if np.any(tail):
        q = np.sqrt(-2.0 * np.log(p[tail]))
        num = ((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]
        den = (((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0
        z[tail] = num / den
    mid = ~tail
    if np.any(mid):
        q = p[mid] - 0.5
        r = q * q
        num = (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q
        den = ((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0
        z[mid] = num / den
    # one Newton step on the erfc-based CDF
    err = normal_cdf(z) - p
    z = z - err * math.sqrt(2.0 * math.pi) * np.exp(0.5 * z * z)
    return z


def normal_ppf(p):
    """Inverse of the standard normal CDF for ``p`` in (0, 1).

    Works on the lower half only and mirrors, so ``1 - p`` is computed exactly
    for the upper half.
    """
    p = np.asarray(p, dtype=float)
    if np.any(~((p > 0) & (p < 1))):
        raise DomainError("normal_ppf requires 0 < p < 1")
    flat = np.atleast_1d(p).ravel()
    upper = flat > 0.5
    lower_p = np.where(upper, 1.0 - flat, flat)
    z = _ppf_lower(lower_p)
    z = np.where(upper, -z, z)
    z[flat == 0.5] = 0.0
    out = z.reshape(np.shape(p))
    return out[()] if out.ndim == 0 else out


# --------------------------------------------------------------------------
# family dispatch


def _check_tau(tau):
    tau = np.asarray(tau, dtype=float)
    if np.any(~((tau > 0) & (tau < 1))):
        raise DomainError("quantile level must lie in (0, 1)")
    return tau


def _scalar(x):
    x = np.asarray(x)
    return x[()] if x.ndim == 0 else x


def sample(spec: DistSpec, rng: np.random.Generator, size=None):
    """Draw from ``spec``; ``size`` defaults to the broadcast parameter shape."""
    if size is None:
        size = spec.shape
    p = spec.params
    f = spec.family
    if f == "normal":
        out = rng.normal(p["mean"], p["std"], size)
    elif f == "lognormal":
        out = rng.lognormal(p["mu"], p["sigma"], size)
    elif f == "exponential":
        out = rng.exponential(p["scale"], size)
    elif f == "weibull":
        out = p["scale"] * rng.weibull(p["shape"], size)
    else:
        out = rng.uniform(p["low"], p["high"], size)
    return _scalar(out)


def quantile(spec: DistSpec, tau):
    """Inverse CDF, ``inf{y : CDF(y) >= tau}``."""
    tau = _check_tau(tau)
    p = spec.params
    f = spec.family
    if f == "normal":
        out = p["mean"] + p["std"] * normal_ppf(tau)
    elif f == "lognormal":
        out = np.exp(p["mu"] + p["sigma"] * normal_ppf(tau))
    elif f == "exponential":
        out = -p["scale"] * np.log1p(-tau)
    elif f == "weibull":
        out = p["scale"] * (-np.log1p(-tau)) ** (1.0 / p["shape"])
    else:
        out = p["low"] + tau * (p["high"] - p["low"])
    return _scalar(out)


def log_pdf(spec: DistSpec, y):
    """Natural-log density; ``-inf`` outside the support."""
    y = np.asarray(y, dtype=float)
    p = spec.params
    f = spec.family
    with np.errstate(divide="ignore", invalid="ignore"):
        if f == "normal":
            z = (y - p["mean"]) / p["std"]
            out = -_LOG_SQRT_2PI - np.log(p["std"]) - 0.5 * z * z
        elif f == "lognormal":
            ly = np.log(np.where(y > 0, y, 1.0))
            z = (ly - p["mu"]) / p["sigma"]
            out = np.where(y > 0, -_LOG_SQRT_2PI - np.log(p["sigma"]) - 0.5 * z * z - ly, -np.inf)
        elif f == "exponential":
            out = np.where(y >= 0, -np.log(p["scale"]) - y / p["scale"], -np.inf)
        elif f == "weibull":
            a, k = p["scale"], p["shape"]
            r = np.where(y >= 0, y, 0.0) / a
            out = np.where(y >= 0, np.log(k) - np.log(a) + (k - 1) * np.log(r) - r**k, -np.inf)
        else:
            inside = (y >= p["low"]) & (y <= p["high"])
            out = np.where(inside, -np.log(p["high"] - p["low"]), -np.inf)
    return _scalar(out)


def cdf(spec: DistSpec, y):
    y = np.asarray(y, dtype=float)
    p = spec.params
    f = spec.family
    if f == "normal":
        out = normal_cdf((y - p["mean"]) / p["std"])
    elif f == "lognormal":
        with np.errstate(divide="ignore"):
            ly = np.log(np.where(y > 0, y, 1.0))
        out = np.where(y > 0, normal_cdf((ly - p["mu"]) / p["sigma"]), 0.0)
    elif f == "exponential":
        out = np.where(y > 0, -np.expm1(-np.maximum(y, 0.0) / p["scale"]), 0.0)
    elif f == "weibull":
        r = np.maximum(y, 0.0) / p["scale"]
        out = np.where(y > 0, -np.expm1(-(r ** p["shape"])), 0.0)
    else:
        out = np.clip((y - p["low"]) / (p["high"] - p["low"]), 0.0, 1.0)
    return _scalar(out)
