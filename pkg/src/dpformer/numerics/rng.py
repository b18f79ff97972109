"""Deterministic random streams.

Every stochastic site draws from its own ``(seed, stream)`` PCG64 generator so
that, e.g., changing the batch shuffle never perturbs weight initialization.
"""
from __future__ import annotations

from enum import IntEnum

import numpy as np

from ..errors import ContractError
from .tensor import Tensor


class Stream(IntEnum):
    INIT = 0
    SHUFFLE = 1
    BUFFER = 2
    DATA = 3
    AUGMENT = 4
    SPLIT = 5


class Rng:
    """PCG64 generator keyed by a 64-bit seed and a stream id."""

    def __init__(self, seed: int, stream: int = 0):
        self.seed = int(seed)
        self.stream = int(stream)
        ss = np.random.SeedSequence(self.seed & (2**64 - 1), spawn_key=(self.stream,))
        self.gen = np.random.Generator(np.random.PCG64(ss))

    def normal(self, shape, std: float = 1.0) -> np.ndarray:
        return self.gen.normal(0.0, std, size=shape)

    def permutation(self, n: int) -> np.ndarray:
        return self.gen.permutation(n)

    def choice(self, n: int, size: int) -> np.ndarray:
        """``size`` distinct indices from ``range(n)``, sorted."""
        return np.sort(self.gen.choice(n, size=size, replace=False))

    def random(self, shape=None) -> np.ndarray:
        return self.gen.random(shape)

    def integers(self, low: int, high: int, shape=None) -> np.ndarray:
        return self.gen.integers(low, high, size=shape)

    def get_state(self) -> dict:
        return self.gen.bit_generator.state

    def set_state(self, state: dict) -> None:
        self.gen.bit_generator.state = state


def gaussian_init(rng: Rng, shape, std: float = 0.02, name: str | None = None,
                  requires_grad: bool = True) -> Tensor:
    if not std > 0:
        raise ContractError(f"gaussian_init std must be positive, got {std}")
    return Tensor(rng.normal(shape, std), requires_grad=requires_grad, name=name)
