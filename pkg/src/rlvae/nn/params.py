"""Named parameter collections, dense layers and the GRU cell."""

from __future__ import annotations

from typing import Iterator

import numpy as np

from rlvae.nn.tensor import Tensor, add, gru, matmul


class Params:
    """Ordered name -> float32 array mapping.

    ``tape()`` wraps every array as a leaf Tensor that records gradients;
    ``frozen()`` wraps them without gradient tracking.
    """

    def __init__(self, arrays: dict[str, np.ndarray] | None = None):
        self.arrays: dict[str, np.ndarray] = {}
        for k, v in (arrays or {}).items():
            self.arrays[k] = np.asarray(v)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.arrays[name]

    def __setitem__(self, name: str, value: np.ndarray) -> None:
        self.arrays[name] = value

    def __contains__(self, name: str) -> bool:
        return name in self.arrays

    def __iter__(self) -> Iterator[str]:
        return iter(self.arrays)

    def __len__(self) -> int:
        return len(self.arrays)

    def items(self):
        return self.arrays.items()

    def names(self, prefix: str = "") -> list[str]:
        return [k for k in self.arrays if k.startswith(prefix)]

    def copy(self) -> "Params":
        return Params({k: v.copy() for k, v in self.arrays.items()})

    def astype(self, dtype) -> "Params":
        return Params({k: v.astype(dtype) for k, v in self.arrays.items()})

    def n_values(self) -> int:
        return int(sum(v.size for v in self.arrays.values()))

    def tape(self, prefix: str = "") -> dict[str, Tensor]:
        return {k: Tensor(v, requires_grad=k.startswith(prefix), name=k) for k, v in self.arrays.items()}

    def frozen(self) -> dict[str, Tensor]:
        return {k: Tensor(v, name=k) for k, v in self.arrays.items()}


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out)).astype(np.float32)


def init_linear(params: Params, rng, name: str, fan_in: int, fan_out: int, bias: bool = True) -> None:
    params[f"{name}.w"] = glorot(rng, fan_in, fan_out)
    if bias:
        params[f"{name}.b"] = np.zeros(fan_out, dtype=np.float32)


def linear(p: dict[str, Tensor], name: str, x: Tensor) -> Tensor:
    y = matmul(x, p[f"{name}.w"])
    b = p.get(f"{name}.b")
    return y if b is None else add(y, b)


def init_gru(params: Params, rng, name: str, dim: int) -> None:
    """Gates packed as [update | reset | candidate] along the output axis."""
    params[f"{name}.wx"] = np.concatenate([glorot(rng, dim, dim) for _ in range(3)], axis=1)
    params[f"{name}.wh"] = np.concatenate([glorot(rng, dim, dim) for _ in range(3)], axis=1)
    params[f"{name}.bx"] = np.zeros(3 * dim, dtype=np.float32)
    params[f"{name}.bh"] = np.zeros(3 * dim, dtype=np.float32)


def gru_cell(p: dict[str, Tensor], name: str, h: Tensor, x: Tensor) -> Tensor:
    """h' = (1 - u) * h + u * c with c = tanh(Wx x + r * (Wh h + bh) + bx)."""
    if h.shape != x.shape:
        raise ValueError(f"GRU shape mismatch: h {h.shape} vs x {x.shape}")
    return gru(h, x, p[f"{name}.wx"], p[f"{name}.wh"], p[f"{name}.bx"], p[f"{name}.bh"])
