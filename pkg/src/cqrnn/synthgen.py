"""Synthetic censored datasets with known conditional quantiles.

Type-1 datasets draw ``x ~ U(0, 2)^D``, a target ``t ~ p_t(.|x)`` and an
independent censoring time ``c ~ p_c(.|x)``, then record ``y = min(t, c)``.
``overlay_censoring`` censors an already-uncensored dataset with
``c_i ~ U(0, c)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from . import distributions as dist
from .data import CensoredDataset
from .exceptions import ConfigurationError, DataError, ParameterError

__all__ = [
    "Type1Spec",
    "CensorOverlay",
    "TYPE1_SPECS",
    "LOGNORM8_BETA",
    "get_spec",
    "generate_type1",
    "make_type1_split",
    "true_quantile",
    "overlay_censoring",
]

SAME_AS_TARGET = "same-as-target"

# Not given in the source tables; any fixed choice keeps the structure.
LOGNORM8_BETA = np.array([0.2, 0.3, -0.1, 0.4, -0.2, 0.1, 0.3, -0.3])


@dataclass(frozen=True)
class Type1Spec:
    """Generating recipe for one synthetic dataset.

    ``censor_fn`` is a callable ``X -> DistSpec``, the string
    ``"same-as-target"``, or ``None`` for no censoring at all.
    """

    name: str
    dim: int
    n_train: int
    n_test: int
    target_fn: Callable[[np.ndarray], dist.DistSpec]
    censor_fn: Union[Callable[[np.ndarray], dist.DistSpec], str, None]
    prop_censored: float = float("nan")  # reference value, diagnostics only

    def censoring(self, x):
        if self.censor_fn is None:
            return None
        if self.censor_fn == SAME_AS_TARGET:
            return self.target_fn(x)
        return self.censor_fn(x)


def _x0(x):
    return x[:, 0]


def _norm4_mean(x):
    return 3 * x[:, 0] + x[:, 1] ** 2 - x[:, 2] ** 2 + 2 * np.sin(x[:, 2] * x[:, 3]) + 6


def _norm4_target(x):
    # variance term uses the first coordinate
    return dist.Normal(_norm4_mean(x), x[:, 0] ** 2 + 0.5)


def _lognorm8_target(x):
    # Lognorm(beta.x, 1) / 10 == Lognorm(beta.x - ln 10, 1)
    return dist.LogNormal(x @ LOGNORM8_BETA - math.log(10.0), np.ones(len(x)))


def _uniform(high):
    return lambda x: dist.Uniform(np.zeros(len(x)), np.full(len(x), float(high)))


def _lognorm_1d(x):
    s = np.maximum(_x0(x) ** 2, 1e-6)
    return dist.LogNormal((_x0(x) - 1) ** 2, s)


_SPECS = [
    Type1Spec(
        "norm_linear", 1, 500, 1000,
        lambda x: dist.Normal(2 * _x0(x) + 10, _x0(x) + 1),
        lambda x: dist.Normal(4 * _x0(x) + 10, 0.8 * _x0(x) + 0.4),
        0.20,
    ),
    Type1Spec(
        "norm_nonlinear", 1, 500, 1000,
        lambda x: dist.Normal(_x0(x) * np.sin(2 * _x0(x)) + 10, 0.5 * _x0(x) + 0.5),
        lambda x: dist.Normal(2 * _x0(x) + 10, np.full(len(x), 2.0)),
        0.24,
    ),
    Type1Spec(
        "exponential", 1, 500, 1000,
        lambda x: dist.Exponential(2 * _x0(x) + 4),
        lambda x: dist.Exponential(-3 * _x0(x) + 15),
        0.30,
    ),
    Type1Spec(
        "weibull", 1, 500, 1000,
        lambda x: dist.Weibull(4 * _x0(x) * np.sin(2 * (_x0(x) - 1)) + 10, np.full(len(x), 5.0)),
        lambda x: dist.Weibull(-3 * _x0(x) + 20, np.full(len(x), 5.0)),
        0.22,
    ),
    Type1Spec("lognorm", 1, 500, 1000, _lognorm_1d, _uniform(10), 0.21),
    Type1Spec(
        "norm_uniform", 1, 500, 1000,
        lambda x: dist.Normal(2 * _x0(x) * np.cos(2 * _x0(x)) + 13, _x0(x) ** 2 + 0.5),
        _uniform(18),
        0.62,
    ),
    Type1Spec("norm_heavy", 4, 2000, 1000, _norm4_target, _uniform(12), 0.80),
    Type1Spec("norm_med", 4, 2000, 1000, _norm4_target, _uniform(20), 0.49),
    Type1Spec("norm_light", 4, 2000, 1000, _norm4_target, _uniform(40), 0.25),
    Type1Spec("norm_same", 4, 2000, 1000, _norm4_target, SAME_AS_TARGET, 0.50),
    Type1Spec("lognorm_heavy", 8, 4000, 1000, _lognorm8_target, _uniform(0.4), 0.75),
    Type1Spec("lognorm_med", 8, 4000, 1000, _lognorm8_target, _uniform(1.0), 0.52),
    Type1Spec("lognorm_light", 8, 4000, 1000, _lognorm8_target, _uniform(3.5), 0.23),
    Type1Spec("lognorm_same", 8, 4000, 1000, _lognorm8_target, SAME_AS_TARGET, 0.50),
]

TYPE1_SPECS = {s.name: s for s in _SPECS}
ONE_DIM = tuple(s.name for s in _SPECS if s.dim == 1)


def get_spec(name: Union[str, Type1Spec]) -> Type1Spec:
    if isinstance(name, Type1Spec):
        return name
    try:
        return TYPE1_SPECS[name]
    except KeyError:
        raise ConfigurationError(
            f"unknown dataset {name!r}; choose from {', '.join(TYPE1_SPECS)}"
        ) from None


def true_quantile(spec, x, tau):
    """Analytic ``tau``-quantile of the target at each row of ``x``."""
    spec = get_spec(spec)
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[1] != spec.dim:
        x = x.reshape(-1, spec.dim)
    return dist.quantile(spec.target_fn(x), tau)


def _quantile_fn(spec):
    def fn(x, tau):
        return true_quantile(spec, x, tau)

    return fn


def generate_type1(spec, seed: int, n: Optional[int] = None) -> CensoredDataset:
    """Draw ``n`` rows (default ``spec.n_train``) of a type-1 dataset.

    Inputs, targets and censoring times come from three independent child
    streams of ``seed``.
    """
    spec = get_spec(spec)
    n = spec.n_train if n is None else int(n)
    if n < 1:
        raise ConfigurationError("n must be positive")
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    x_ss, t_ss, c_ss = ss.spawn(3)
    x = np.random.default_rng(x_ss).uniform(0.0, 2.0, size=(n, spec.dim))
    t = np.asarray(dist.sample(spec.target_fn(x), np.random.default_rng(t_ss)), dtype=float)
    cens = spec.censoring(x)
    if cens is None:
        c = np.full(n, np.inf)
    else:
        c = np.asarray(dist.sample(cens, np.random.default_rng(c_ss)), dtype=float)
    y = np.minimum(t, c)
    delta = (t <= c).astype(np.int8)  # ties count as observed
    return CensoredDataset(
        x, y, delta, true_targets=t, true_quantile_fn=_quantile_fn(spec), name=spec.name
    )


def make_type1_split(spec, seed: int, n_train: Optional[int] = None,
                     n_test: Optional[int] = None):
    """Independent train and test draws at the reference sizes."""
    spec = get_spec(spec)
    tr_ss, te_ss = np.random.SeedSequence([seed, 1]).spawn(2)
    train = generate_type1(spec, tr_ss, spec.n_train if n_train is None else n_train)
    test = generate_type1(spec, te_ss, spec.n_test if n_test is None else n_test)
    return train, test


@dataclass(frozen=True)
class CensorOverlay:
    """Uniform censoring ``c_i ~ U(0, c)``.

    Exactly one of ``fixed`` (c itself) or ``multiple_of_max``
    (``c = m * max_i y_i``) is set.
    """

    fixed: Optional[float] = None
    multiple_of_max: Optional[float] = None

    def __post_init__(self):
        if (self.fixed is None) == (self.multiple_of_max is None):
            raise ParameterError("set exactly one of fixed / multiple_of_max")

    def resolve(self, labels) -> float:
        if self.fixed is not None:
            c = float(self.fixed)
        else:
            c = float(self.multiple_of_max) * float(np.max(labels))
        if not c > 0:
            raise ParameterError(f"censoring bound must be > 0, got {c}")
        return c


def overlay_censoring(uncensored: CensoredDataset, ov: CensorOverlay, seed) -> CensoredDataset:
    if uncensored.n_censored:
        raise DataError("overlay_censoring expects a fully observed dataset")
    t = uncensored.labels
    c_max = ov.resolve(t)
    c = np.random.default_rng(seed).uniform(0.0, c_max, size=len(t))
    y = np.minimum(t, c)
    delta = (t <= c).astype(np.int8)
    return CensoredDataset(uncensored.features, y, delta, true_targets=t, name=uncensored.name)
