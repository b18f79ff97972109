"""Class prompt module: prototype pool, cosine selection and a prompt MSA encoder."""
from __future__ import annotations

import warnings

import numpy as np

from .blocks import Module, TransformerBlock, patch_avg_pool
from .errors import ContractError, DimensionError, LifecycleError
from .numerics import Rng, Tensor, gaussian_init
from .numerics import tensor as T


class ClassPrototypePool(Module):
    """Frozen prototypes from earlier tasks plus the trainable set of the current task."""

    def __init__(self, dim: int, std: float = 0.02):
        self.dim = dim
        self.std = std
        self.previous: Tensor | None = None
        self.current: Tensor | None = None
        self.provenance: list[int] = []
        self.task = 0

    @property
    def n_previous(self) -> int:
        return 0 if self.previous is None else self.previous.shape[0]

    @property
    def n_current(self) -> int:
        return 0 if self.current is None else self.current.shape[0]

    def __len__(self) -> int:
        return self.n_previous + self.n_current

    def grow(self, task: int, n_new: int, rng: Rng) -> None:
        """Freeze the current set and open ``n_new`` fresh prototypes for ``task``."""
        if task != self.task + 1:
            raise LifecycleError(f"class pool is at task {self.task}; cannot grow for task {task}")
        if self.current is not None:
            frozen = [self.current.data] if self.previous is None else [self.previous.data, self.current.data]
            self.previous = Tensor(np.concatenate(frozen, axis=0), requires_grad=False)
        self.current = gaussian_init(rng, (n_new, self.dim), self.std)
        self.provenance += [task] * n_new
        self.task = task

    def prototypes(self) -> Tensor:
        """All prototypes stacked (K, D), previous first."""
        parts = [t for t in (self.previous, self.current) if t is not None]
        if not parts:
            raise ContractError("class prototype pool is empty")
        return parts[0] if len(parts) == 1 else T.concat(parts, axis=0)


def cosine_scores(pooled: np.ndarray, protos: np.ndarray) -> np.ndarray:
    """(B, K) cosine similarities; zero-norm prototypes are scored -inf."""
    pnorm = np.linalg.norm(protos, axis=1)
    dead = pnorm == 0
    if dead.all():
        raise ContractError("every class prototype has zero norm")
    if dead.any():
        warnings.warn(f"{int(dead.sum())} zero-norm class prototype(s) excluded from selection")
    xnorm = np.linalg.norm(pooled, axis=1, keepdims=True)
    scores = (pooled @ protos.T) / np.where(xnorm == 0, 1.0, xnorm) / np.where(dead, 1.0, pnorm)
    scores[:, dead] = -np.inf
    return scores


def select_class_prototype(p_l, pool: ClassPrototypePool) -> tuple[int, Tensor]:
    """Index and value of the prototype most cosine-similar to the pooled feature ``p_l``."""
    vec = np.asarray(p_l.data if isinstance(p_l, Tensor) else p_l, dtype=np.float64).reshape(1, -1)
    if not np.linalg.norm(vec) > 0:
        raise ContractError("pooled feature has zero norm")
    protos = pool.prototypes()
    if vec.shape[1] != protos.shape[1]:
        raise DimensionError(f"pooled feature dim {vec.shape[1]} != prototype dim {protos.shape[1]}")
    idx = int(np.argmax(cosine_scores(vec, protos.data)[0]))
    return idx, protos[idx:idx + 1]


def average_class_prototype(pool: ClassPrototypePool) -> Tensor:
    return pool.prototypes().mean(axis=0, keepdims=True)


def gather_rows(table: Tensor, index: np.ndarray) -> Tensor:
    """Rows ``table[index]`` as a one-hot matmul, so gradients scatter back to the table."""
    onehot = np.zeros((len(index), table.shape[0]))
    onehot[np.arange(len(index)), index] = 1.0
    return T.as_tensor(onehot) @ table


def prepend_prompts(tokens: Tensor, selected: Tensor, average: Tensor) -> Tensor:
    """selected (B, D), average (1, D), tokens (B, N, D) -> (B, N+2, D)."""
    b, _, d = tokens.shape
    if selected.shape[-1] != d or average.shape[-1] != d:
        raise DimensionError(f"prompt dim {selected.shape[-1]} != token dim {d}")
    avg = T.broadcast_to(average.reshape(1, 1, d), (b, 1, d))
    return T.concat([selected.reshape(b, 1, d), avg, tokens], axis=1)


class ClassPromptModule(Module):
    def __init__(self, dim: int, heads: int, rng: Rng, mlp_ratio: int = 4, std: float = 0.02,
                 enabled: bool = True):
        self.enabled = enabled
        self.pool = ClassPrototypePool(dim, std) if enabled else None
        self.encoder = TransformerBlock(dim, heads, rng, mlp_ratio, std)

    def __call__(self, z_l: Tensor) -> tuple[Tensor, np.ndarray | None]:
        """z_L (B, N, D) -> (z_cls (B, N+2, D), selected indices). Disabled: (B, N, D), None."""
        if not self.enabled:
            return self.encoder(z_l), None
        protos = self.pool.prototypes()
        p_l = patch_avg_pool(z_l)
        index = np.argmax(cosine_scores(p_l.data, protos.data), axis=1)
        z = prepend_prompts(z_l, gather_rows(protos, index), protos.mean(axis=0, keepdims=True))
        return self.encoder(z), index


def class_prompt_forward(z_l: Tensor, module: ClassPromptModule) -> Tensor:
    return module(z_l)[0]
