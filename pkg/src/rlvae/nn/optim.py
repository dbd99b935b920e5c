"""Adam, decay schedules and the scalar Huber loss."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from rlvae.nn.params import Params


@dataclass(frozen=True)
class ExpSchedule:
    """value * rate ** (step / interval), decayed smoothly."""

    value: float
    rate: float
    interval: float

    def __post_init__(self):
        if self.value <= 0 or not 0 < self.rate <= 1 or self.interval <= 0:
            raise ValueError("schedule needs value > 0, rate in (0, 1], interval > 0")

    def __call__(self, step: int) -> float:
        return float(self.value * self.rate ** (step / self.interval))


def LrSchedule(value: float = 1e-5, rate: float = 0.99, interval: float = 100_000) -> ExpSchedule:
    return ExpSchedule(value, rate, interval)


def EpsSchedule(value: float = 1.0, rate: float = 0.95, interval: float = 10_000) -> ExpSchedule:
    return ExpSchedule(value, rate, interval)


def huber_value(x: float, delta: float = 1.0) -> float:
    ax = abs(x)
    return 0.5 * x * x if ax <= delta else delta * (ax - 0.5 * delta)


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: Params, **kw) -> "AdamState":
        st = cls(**kw)
        for k, p in params.items():
            st.m[k] = np.zeros_like(p)
            st.v[k] = np.zeros_like(p)
        return st


def adam_step(params: Params, grads: dict[str, np.ndarray], state: AdamState, lr: float) -> None:
    """Bias-corrected Adam update in place. Names missing from ``grads`` are untouched."""
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for k in params:
        g = grads.get(k)
        if g is None:
            continue
        m = state.m[k]
        v = state.v[k]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        mhat = m / np.float32(c1)
        vhat = v / np.float32(c2)
        params[k] = (params[k] - np.float32(lr) * mhat / (np.sqrt(vhat) + np.float32(state.eps))).astype(params[k].dtype)
