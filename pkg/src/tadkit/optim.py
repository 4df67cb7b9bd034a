"""Adam optimizer and fan-based uniform (Xavier) initialization."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, UsageError
from .tensor import DTYPE, Parameter


def _fans(shape) -> tuple[int, int]:
    shape = tuple(int(s) for s in shape)
    if len(shape) == 1:
        return shape[0], shape[0]
    if len(shape) == 2:
        return shape[0], shape[1]
    if len(shape) == 3:  # (K, C_in, C_out) temporal conv kernel
        k, c_in, c_out = shape
        return k * c_in, k * c_out
    raise ConfigError(f"no fan rule for shape {shape}")


def xavier_init(shape, seed) -> np.ndarray:
    """Uniform values on [-a, a] with a = sqrt(6 / (fan_in + fan_out))."""
    fan_in, fan_out = _fans(shape)
    if fan_in == 0 or fan_out == 0:
        raise ConfigError(f"zero fan for shape {tuple(shape)}")
    a = math.sqrt(6.0 / (fan_in + fan_out))
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return rng.uniform(-a, a, size=tuple(shape)).astype(DTYPE)


@dataclass
class AdamState:
    """Per-parameter moment estimates plus the shared step counter."""

    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    first_moment: dict = field(default_factory=dict)
    second_moment: dict = field(default_factory=dict)


class Adam:
    """Adam with bias correction; deterministic given identical inputs."""

    def __init__(self, params, learning_rate, beta1=0.9, beta2=0.999, epsilon=1e-8):
        self.params = list(params)
        names = [p.name for p in self.params]
        if len(set(names)) != len(names):
            raise ConfigError("parameter names must be unique")
        self.state = AdamState(learning_rate, beta1, beta2, epsilon)
        for p in self.params:
            self.state.first_moment[p.name] = np.zeros_like(p.data)
            self.state.second_moment[p.name] = np.zeros_like(p.data)

    def step(self):
        for p in self.params:
            if p.grad is None:
                raise UsageError(f"adam step on unpopulated gradient for {p.name!r}")
        s = self.state
        s.step_count += 1
        bc1 = 1.0 - s.beta1 ** s.step_count
        bc2 = 1.0 - s.beta2 ** s.step_count
        for p in self.params:
            m = s.first_moment[p.name]
            v = s.second_moment[p.name]
            m *= s.beta1
            m += (1.0 - s.beta1) * p.grad
            v *= s.beta2
            v += (1.0 - s.beta2) * (p.grad * p.grad)
            p.data -= s.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + s.epsilon)

    def zero_grad(self):
        for p in self.params:
            p.grad = None
