"""Feature encoder: a flat stack of dilated-neighborhood transformer blocks."""
from __future__ import annotations

from .blocks import Module, TransformerBlock, clamp_kernel, neighborhood_mask
from .errors import ConfigError, DimensionError
from .numerics import Rng, Tensor


def dilation_schedule(depth: int, hw: tuple[int, int], kernel: int) -> list[tuple[int, int]]:
    """Per-layer (kernel, dilation): fine layers at dilation 1 alternating with
    the coarsest dilation the map allows. ``kernel`` is clamped to the map."""
    k = clamp_kernel(hw[0], hw[1], kernel)
    if k < 1:
        raise ConfigError(f"feature map {hw} too small for neighborhood attention")
    coarse = max(1, min(hw) // k)
    return [(k, 1 if layer % 2 == 0 else coarse) for layer in range(depth)]


class EncoderStack(Module):
    def __init__(self, depth: int, dim: int, heads: int, rng: Rng, attention: str = "dina",
                 kernel: int = 7, mlp_ratio: int = 4, std: float = 0.02):
        if attention not in ("msa", "dina"):
            raise ConfigError(f"unknown attention kind {attention!r}")
        self.attention = attention
        self.kernel = kernel
        self.layers = [TransformerBlock(dim, heads, rng, mlp_ratio, std) for _ in range(depth)]

    def __len__(self) -> int:
        return len(self.layers)

    def masks(self, hw: tuple[int, int]) -> list:
        if self.attention == "msa":
            return [None] * len(self.layers)
        return [neighborhood_mask(hw[0], hw[1], k, d)
                for k, d in dilation_schedule(len(self.layers), hw, self.kernel)]

    def __call__(self, z0: Tensor, hw: tuple[int, int]) -> Tensor:
        if z0.shape[1] != hw[0] * hw[1]:
            raise DimensionError(f"{z0.shape[1]} tokens do not match a {hw[0]}x{hw[1]} layout")
        z = z0
        for block, mask in zip(self.layers, self.masks(hw)):
            z = block(z, mask)
        return z


def encode(z0: Tensor, stack: EncoderStack, hw: tuple[int, int]) -> Tensor:
    return stack(z0, hw)
