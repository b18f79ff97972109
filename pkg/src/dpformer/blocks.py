"""Reusable transformer pieces: tokenizer, LN, MLP, MSA and dilated neighborhood attention.

Token sequences are batched ``(B, N, D)`` tensors. Attention modules take an
optional boolean ``(N, N)`` mask; DiNA is MSA restricted by the neighborhood
mask, so the two share weights and code.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Iterator

import numpy as np

from .errors import ConfigError, ContractError, DimensionError
from .numerics import Rng, Tensor, gaussian_init
from .numerics import tensor as T


class Module:
    """Minimal parameter container: tensors and sub-modules found in ``vars(self)``."""

    def named_tensors(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for key, val in vars(self).items():
            name = f"{prefix}{key}"
            if isinstance(val, Tensor):
                yield name, val
            elif isinstance(val, Module):
                yield from val.named_tensors(name + ".")
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Module):
                        yield from item.named_tensors(f"{name}.{i}.")

    def named_parameters(self) -> dict[str, Tensor]:
        return {k: t for k, t in self.named_tensors() if t.requires_grad}

    def state(self) -> dict[str, Tensor]:
        return dict(self.named_tensors())

    def num_parameters(self, trainable_only: bool = False) -> int:
        tensors = self.named_parameters() if trainable_only else self.state()
        return int(sum(t.size for t in tensors.values()))

    def zero_grad(self) -> None:
        for t in self.named_parameters().values():
            t.zero_grad()


class Linear(Module):
    def __init__(self, d_in: int, d_out: int, rng: Rng, std: float = 0.02):
        self.weight = gaussian_init(rng, (d_in, d_out), std)
        self.bias = Tensor(np.zeros(d_out), requires_grad=True)

    @property
    def out_features(self) -> int:
        return self.weight.shape[1]

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.weight.shape[0]:
            raise DimensionError(f"Linear expects last dim {self.weight.shape[0]}, got {x.shape}")
        return x @ self.weight + self.bias

    def grow(self, n_new: int, rng: Rng, std: float = 0.02) -> None:
        """Append ``n_new`` Gaussian output units; existing columns are copied bit-exactly."""
        d_in = self.weight.shape[0]
        self.weight = Tensor(np.concatenate([self.weight.data, rng.normal((d_in, n_new), std)], axis=1),
                             requires_grad=True)
        self.bias = Tensor(np.concatenate([self.bias.data, rng.normal((n_new,), std)]),
                           requires_grad=True)


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5):
        self.gain = Tensor(np.ones(dim), requires_grad=True)
        self.bias = Tensor(np.zeros(dim), requires_grad=True)
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        return T.layer_norm(x, self.gain, self.bias, self.eps)


class MLP(Module):
    def __init__(self, dim: int, rng: Rng, ratio: int = 4, std: float = 0.02):
        self.fc1 = Linear(dim, ratio * dim, rng, std)
        self.fc2 = Linear(ratio * dim, dim, rng, std)

    def __call__(self, x: Tensor) -> Tensor:
        return self.fc2(T.gelu(self.fc1(x)))


def mlp_block(x: Tensor, mlp: MLP) -> Tensor:
    return mlp(x)


@dataclass(frozen=True)
class AttentionConfig:
    heads: int = 4
    kind: str = "dina"  # "msa" | "dina"
    kernel: int = 7
    dilation: int = 1

    def validate(self, dim: int) -> None:
        if self.heads < 1 or dim % self.heads:
            raise ConfigError(f"embedding dim {dim} not divisible by {self.heads} heads")
        if self.kind not in ("msa", "dina"):
            raise ConfigError(f"unknown attention kind {self.kind!r}")
        if self.kind == "dina" and (self.kernel < 1 or self.kernel % 2 == 0 or self.dilation < 1):
            raise ConfigError(f"DiNA needs odd kernel and positive dilation, got k={self.kernel} d={self.dilation}")


class Attention(Module):
    """Multi-head self-attention with fused QKV projection."""

    def __init__(self, dim: int, heads: int, rng: Rng, std: float = 0.02):
        if heads < 1 or dim % heads:
            raise ConfigError(f"embedding dim {dim} not divisible by {heads} heads")
        self.heads = heads
        self.qkv = Linear(dim, 3 * dim, rng, std)
        self.proj = Linear(dim, dim, rng, std)
        self.last_attention: np.ndarray | None = None

    def __call__(self, x: Tensor, mask: np.ndarray | None = None) -> Tensor:
        b, n, d = x.shape
        h = self.heads
        dh = d // h
        qkv = self.qkv(x).reshape(b, n, 3, h, dh).transpose(2, 0, 3, 1, 4)
        q, k, v = qkv[0], qkv[1], qkv[2]
        scores = (q @ k.transpose(0, 1, 3, 2)) * (1.0 / np.sqrt(dh))
        att = T.softmax(scores, axis=-1, mask=mask)
        self.last_attention = att.data
        out = (att @ v).transpose(0, 2, 1, 3).reshape(b, n, d)
        return self.proj(out)


def msa(x: Tensor, attn: Attention) -> Tensor:
    return attn(x)


def _axis_neighbors(n: int, k: int, d: int) -> np.ndarray:
    """(n, k) neighbor coordinates along one axis, windows shifted inward at borders."""
    if n // d < k:
        raise ConfigError(f"kernel {k} at dilation {d} does not fit an axis of length {n}")
    out = np.empty((n, k), dtype=np.int64)
    for i in range(n):
        r, ig = i % d, i // d
        group_len = len(range(r, n, d))
        start = min(max(ig - k // 2, 0), group_len - k)
        out[i] = r + d * (start + np.arange(k))
    return out


@lru_cache(maxsize=64)
def neighborhood_indices(height: int, width: int, kernel: int, dilation: int) -> np.ndarray:
    """(H*W, k*k) flat key indices attended by each query (row-major layout)."""
    if kernel % 2 == 0:
        raise ConfigError(f"kernel must be odd, got {kernel}")
    rows = _axis_neighbors(height, kernel, dilation)
    cols = _axis_neighbors(width, kernel, dilation)
    idx = rows[:, None, :, None] * width + cols[None, :, None, :]
    idx = idx.reshape(height * width, kernel * kernel)
    idx.setflags(write=False)
    return idx


@lru_cache(maxsize=64)
def neighborhood_mask(height: int, width: int, kernel: int, dilation: int) -> np.ndarray:
    idx = neighborhood_indices(height, width, kernel, dilation)
    mask = np.zeros((height * width, height * width), dtype=bool)
    np.put_along_axis(mask, idx, True, axis=1)
    mask.setflags(write=False)
    return mask


def clamp_kernel(height: int, width: int, kernel: int) -> int:
    """Largest odd kernel <= ``kernel`` that fits the smaller map side."""
    k = min(kernel, height, width)
    return k if k % 2 else k - 1


def dina(x: Tensor, attn: Attention, hw: tuple[int, int], kernel: int, dilation: int = 1) -> Tensor:
    height, width = hw
    if x.shape[1] != height * width:
        raise DimensionError(f"{x.shape[1]} tokens do not match a {height}x{width} layout")
    if kernel * kernel > height * width:
        raise ConfigError(f"kernel {kernel} exceeds the {height}x{width} feature map")
    return attn(x, mask=neighborhood_mask(height, width, kernel, dilation))


class TransformerBlock(Module):
    """Pre-norm block: x + Attn(LN(x)), then + MLP(LN(.))."""

    def __init__(self, dim: int, heads: int, rng: Rng, mlp_ratio: int = 4, std: float = 0.02):
        self.ln1 = LayerNorm(dim)
        self.attn = Attention(dim, heads, rng, std)
        self.ln2 = LayerNorm(dim)
        self.mlp = MLP(dim, rng, mlp_ratio, std)

    def __call__(self, x: Tensor, mask: np.ndarray | None = None) -> Tensor:
        x = self.attn(self.ln1(x), mask) + x
        return self.mlp(self.ln2(x)) + x


@dataclass(frozen=True)
class TokenizerConfig:
    in_channels: int = 3
    dim: int = 96
    patch: int = 3
    stride: int = 2
    layers: int = 2

    def output_extent(self, height: int, width: int) -> tuple[int, int]:
        for _ in range(self.layers):
            height, width = -(-height // self.stride), -(-width // self.stride)
        return height, width


class Tokenizer(Module):
    """Stacked overlapping patch projections (zero padded, GELU between layers), then LayerNorm.

    The closing norm keeps the first encoder LayerNorm from seeing near-constant
    tokens, whose 1/sigma gradient scaling otherwise destabilizes training.
    """

    def __init__(self, cfg: TokenizerConfig, rng: Rng, std: float = 0.02):
        if cfg.stride < 1 or cfg.patch < 1:
            raise ConfigError("tokenizer patch and stride must be positive")
        self.cfg = cfg
        self.convs = []
        c = cfg.in_channels
        for _ in range(cfg.layers):
            self.convs.append(Linear(c * cfg.patch * cfg.patch, cfg.dim, rng, std))
            c = cfg.dim
        self.norm = LayerNorm(cfg.dim)

    def __call__(self, images) -> tuple[Tensor, tuple[int, int]]:
        x = T.as_tensor(images)
        if x.ndim == 3:
            x = x.reshape(1, *x.shape)
        b, c, h, w = x.shape
        p, s = self.cfg.patch, self.cfg.stride
        if c != self.cfg.in_channels:
            raise DimensionError(f"expected {self.cfg.in_channels} channels, got {c}")
        tokens = None
        for i, conv in enumerate(self.convs):
            if h < p or w < p:
                raise DimensionError(f"{h}x{w} input is smaller than the {p}x{p} patch")
            if i:
                x = T.gelu(tokens).transpose(0, 2, 1).reshape(b, self.cfg.dim, h, w)
            tokens = conv(T.im2col(x, p, s, p // 2))
            h, w = -(-h // s), -(-w // s)
        return self.norm(tokens), (h, w)


def tokenize(image, tokenizer: Tokenizer) -> tuple[Tensor, tuple[int, int]]:
    return tokenizer(image)


def patch_avg_pool(x: Tensor) -> Tensor:
    """Mean over the token axis of a (B, N, D) sequence -> (B, D)."""
    if x.ndim != 3:
        raise DimensionError(f"expected (B, N, D) tokens, got {x.shape}")
    if x.shape[1] == 0:
        raise ContractError("cannot pool an empty token sequence")
    return x.mean(axis=1)
