"""A small fully-connected network with hand-written backprop and Adam."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .distributions import normal_cdf
from .exceptions import ConfigurationError, NumericError, ShapeError, UsageError

__all__ = ["NetConfig", "MLP", "Adam", "adam_step", "init"]

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)
ACTIVATIONS = ("relu", "gelu")


@dataclass(frozen=True)
class NetConfig:
    input_dim: int
    n_outputs: int
    hidden_sizes: tuple = (100, 100)
    activation: str = "relu"
    dropout: bool = False
    dropout_rate: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))
        if self.input_dim < 1 or self.n_outputs < 1 or any(h < 1 for h in self.hidden_sizes):
            raise ConfigurationError("layer sizes must be positive")
        if self.activation not in ACTIVATIONS:
            raise ConfigurationError(f"activation must be one of {ACTIVATIONS}")
        if not 0.0 <= self.dropout_rate <= 1.0:
            raise ConfigurationError("dropout_rate must lie in [0, 1]")

    @property
    def layer_sizes(self):
        return (self.input_dim, *self.hidden_sizes, self.n_outputs)


def _gelu(z):
    return z * normal_cdf(z)


def _gelu_grad(z):
    return normal_cdf(z) + z * _INV_SQRT_2PI * np.exp(-0.5 * z * z)


class MLP:
    """Multi-output MLP; ``params`` is ``[W0, b0, W1, b1, ...]``.

    ``W_l`` has shape ``(fan_in, fan_out)`` so a batch propagates as
    ``h @ W + b``.
    """

    def __init__(self, config: NetConfig, params: Sequence[np.ndarray]):
        self.config = config
        sizes = config.layer_sizes
        if len(params) != 2 * (len(sizes) - 1):
            raise ShapeError("parameter list does not match the layer layout")
        self.params = [np.array(p, dtype=float) for p in params]
        for l in range(len(sizes) - 1):
            if self.params[2 * l].shape != (sizes[l], sizes[l + 1]):
                raise ShapeError(f"layer {l} weight has shape {self.params[2 * l].shape}")
            if self.params[2 * l + 1].shape != (sizes[l + 1],):
                raise ShapeError(f"layer {l} bias has shape {self.params[2 * l + 1].shape}")
        self._version = 0

    @classmethod
    def init(cls, config: NetConfig, seed=0) -> "MLP":
        """Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero."""
        rng = np.random.default_rng(seed)
        sizes = config.layer_sizes
        params = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            bound = 1.0 / math.sqrt(fan_in)
            params.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            params.append(np.zeros(fan_out))
        return cls(config, params)

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params)

    def touch(self):
        """Mark parameters as modified; invalidates outstanding caches."""
        self._version += 1

    def forward(self, x, train: bool = False, rng: Optional[np.random.Generator] = None,
                masks: Optional[Sequence[np.ndarray]] = None):
        """Return ``(outputs, cache)``.

        Dropout is active only when ``train`` is true and the config enables
        it; masks are drawn from ``rng`` unless given explicitly.
        """
        x = np.asarray(x, dtype=float)
        if x.ndim != 2 or x.shape[1] != self.config.input_dim:
            raise ShapeError(f"expected input of shape (batch, {self.config.input_dim}), got {x.shape}")
        cfg = self.config
        use_dropout = train and cfg.dropout
        if use_dropout and masks is None and rng is None:
            raise UsageError("dropout in train mode needs a random stream")
        n_hidden = len(cfg.hidden_sizes)
        inputs, pre, used_masks = [], [], []
        h = x
        for l in range(n_hidden):
            W, b = self.params[2 * l], self.params[2 * l + 1]
            inputs.append(h)
            z = h @ W + b
            pre.append(z)
            if cfg.activation == "relu":
                h = np.maximum(z, 0.0)
            else:
                h = _gelu(z)
            if use_dropout:
                if masks is not None:
                    m = masks[l]
                else:
                    keep = 1.0 - cfg.dropout_rate
                    if keep <= 0.0:
                        m = np.zeros_like(h)
                    else:
                        m = (rng.random(h.shape) < keep) / keep
                used_masks.append(m)
                h = h * m
        inputs.append(h)
        out = h @ self.params[-2] + self.params[-1]
        cache = {"inputs": inputs, "pre": pre, "masks": used_masks if use_dropout else None,
                 "version": self._version}
        return out, cache

    def backward(self, cache, grad_out):
        """Gradients of ``sum(outputs * grad_out)`` w.r.t. every parameter."""
        if cache["version"] != self._version:
            raise UsageError("cache is stale: parameters changed since the forward pass")
        g = np.asarray(grad_out, dtype=float)
        inputs, pre, masks = cache["inputs"], cache["pre"], cache["masks"]
        if g.shape != (inputs[0].shape[0], self.config.n_outputs):
            raise ShapeError(f"grad_outputs has shape {g.shape}")
        n_layers = len(self.params) // 2
        grads = [None] * len(self.params)
        for l in range(n_layers - 1, -1, -1):
            h_in = inputs[l]
            grads[2 * l] = h_in.T @ g
            grads[2 * l + 1] = g.sum(axis=0)
            if l == 0:
                break
            g = g @ self.params[2 * l].T
            if masks is not None:
                g = g * masks[l - 1]
            z = pre[l - 1]
            if self.config.activation == "relu":
                g = g * (z > 0)
            else:
                g = g * _gelu_grad(z)
        return grads

    # -- serialization ----------------------------------------------------

    def flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params])

    @classmethod
    def from_flat(cls, config: NetConfig, vec) -> "MLP":
        vec = np.asarray(vec, dtype=float)
        sizes = config.layer_sizes
        expected = sum((a + 1) * b for a, b in zip(sizes[:-1], sizes[1:]))
        if vec.ndim != 1 or vec.size != expected:
            raise ShapeError(f"flat vector has {vec.size} entries, expected {expected}")
        params, k = [], 0
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            params.append(vec[k:k + fan_in * fan_out].reshape(fan_in, fan_out).copy())
            k += fan_in * fan_out
            params.append(vec[k:k + fan_out].copy())
            k += fan_out
        return cls(config, params)

    def to_dict(self):
        cfg = asdict(self.config)
        cfg["hidden_sizes"] = list(cfg["hidden_sizes"])
        return {"config": cfg, "params": self.flat().tolist()}

    @classmethod
    def from_dict(cls, d) -> "MLP":
        return cls.from_flat(NetConfig(**d["config"]), d["params"])

    def save(self, path):
        Path(path).write_text(json.dumps({"format": "cqrnn-mlp", "version": 1, **self.to_dict()}))

    @classmethod
    def load(cls, path) -> "MLP":
        d = json.loads(Path(path).read_text())
        if d.get("format") != "cqrnn-mlp":
            raise UsageError(f"{path} is not an MLP checkpoint")
        return cls.from_dict(d)


def init(cfg: NetConfig, seed=0) -> MLP:
    return MLP.init(cfg, seed)


@dataclass
class Adam:
    """Adam with decoupled weight decay and step-wise learning-rate drops.

    The learning rate is multiplied by ``drop_factor`` once the 1-based step
    count reaches ``ceil(p * total_steps)`` for each ``p`` in ``drop_points``.
    """

    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 1e-4
    drop_points: tuple = (0.7, 0.9)
    drop_factor: float = 0.1
    total_steps: Optional[int] = None
    step_count: int = 0
    m: list = field(default_factory=list, repr=False)
    v: list = field(default_factory=list, repr=False)

    def lr_at(self, step: int) -> float:
        if not self.total_steps:
            return self.lr
        n_drops = sum(step >= math.ceil(round(p * self.total_steps, 9)) for p in self.drop_points)
        return self.lr * self.drop_factor ** n_drops

    def step(self, params: list, grads: list) -> None:
        """Update ``params`` in place."""
        for g in grads:
            if not np.all(np.isfinite(g)):
                raise NumericError(f"non-finite gradient at step {self.step_count + 1}")
        if not self.m:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.step_count += 1
        t = self.step_count
        lr = self.lr_at(t)
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1**t
        c2 = 1.0 - b2**t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            if self.weight_decay:
                p -= lr * self.weight_decay * p
            p -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def adam_step(model: MLP, state: Adam, grads, total_steps: Optional[int] = None) -> None:
    if total_steps is not None:
        state.total_steps = total_steps
    state.step(model.params, grads)
    model.touch()
