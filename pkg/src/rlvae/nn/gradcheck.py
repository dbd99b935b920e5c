"""Finite-difference gradient verification."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from rlvae.nn.params import Params
from rlvae.nn.tensor import Tensor


@dataclass
class GradCheckReport:
    max_rel_error: float
    worst: str
    n_probed: int
    tolerance: float

    @property
    def ok(self) -> bool:
        return self.max_rel_error <= self.tolerance


def grad_check(
    f: Callable[[dict[str, Tensor]], Tensor],
    params: Params,
    *,
    names: list[str] | None = None,
    probes_per_param: int = 8,
    tolerance: float = 1e-3,
    h: float = 1e-4,
    floor: float = 1e-3,
    rng: np.random.Generator | None = None,
) -> GradCheckReport:
    """Compare float32 reverse-mode gradients against float64 central differences.

    ``f`` maps a dict of parameter Tensors to a scalar Tensor. The relative
    error is ``|a - n| / max(|a|, |n|, floor)``; ``floor`` keeps tiny
    gradients from dividing by zero.
    """
    rng = rng or np.random.default_rng(0)
    names = names or list(params)
    p32 = params.astype(np.float32)
    tape = p32.tape()
    out = f(tape)
    out.backward()
    analytic = {k: (tape[k].grad if tape[k].grad is not None else np.zeros_like(p32[k])) for k in names}

    p64 = params.astype(np.float64)

    def value(arrays: Params) -> float:
        return float(f(arrays.frozen()).data)

    worst, worst_name, n = 0.0, "", 0
    for k in names:
        flat = p64[k].reshape(-1)
        picks = rng.choice(flat.size, size=min(probes_per_param, flat.size), replace=False)
        for idx in picks:
            orig = flat[idx]
            flat[idx] = orig + h
            up = value(p64)
            flat[idx] = orig - h
            down = value(p64)
            flat[idx] = orig
            num = (up - down) / (2 * h)
            ana = float(analytic[k].reshape(-1)[idx])
            err = abs(ana - num) / max(abs(ana), abs(num), floor)
            n += 1
            if err > worst:
                worst, worst_name = err, f"{k}[{idx}]"
    return GradCheckReport(worst, worst_name, n, tolerance)
