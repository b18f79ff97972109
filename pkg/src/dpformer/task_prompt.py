"""Task prompt module: FC task selector, task prototype pool and a prompt MSA encoder."""
from __future__ import annotations

import numpy as np

from .blocks import Linear, Module, TransformerBlock, patch_avg_pool
from .class_prompt import gather_rows, prepend_prompts
from .errors import ContractError, DimensionError, LifecycleError
from .numerics import Rng, Tensor, gaussian_init
from .numerics import tensor as T


class TaskPrototypePool(Module):
    """Frozen prototypes of tasks 1..t-1 and the trainable prototype of task t."""

    def __init__(self, dim: int, std: float = 0.02):
        self.dim = dim
        self.std = std
        self.previous: Tensor | None = None
        self.current: Tensor | None = None

    @property
    def task(self) -> int:
        return len(self)

    def __len__(self) -> int:
        n_prev = 0 if self.previous is None else self.previous.shape[0]
        return n_prev + (self.current is not None)

    def grow(self, task: int, rng: Rng) -> None:
        if task != self.task + 1:
            raise LifecycleError(f"task pool is at task {self.task}; cannot grow for task {task}")
        if self.current is not None:
            frozen = [self.current.data] if self.previous is None else [self.previous.data, self.current.data]
            self.previous = Tensor(np.concatenate(frozen, axis=0), requires_grad=False)
        self.current = gaussian_init(rng, (1, self.dim), self.std)

    def prototypes(self) -> Tensor:
        parts = [t for t in (self.previous, self.current) if t is not None]
        if not parts:
            raise ContractError("task prototype pool is empty")
        return parts[0] if len(parts) == 1 else T.concat(parts, axis=0)


class TaskSelectorHead(Linear):
    """Fully connected layer with one output unit per task seen so far."""

    def __init__(self, dim: int, std: float = 0.02):
        self.weight = Tensor(np.zeros((dim, 0)), requires_grad=True)
        self.bias = Tensor(np.zeros(0), requires_grad=True)
        self.std = std

    @property
    def rows(self) -> int:
        return self.out_features

    def grow(self, n_new: int, rng: Rng, std: float | None = None) -> None:
        super().grow(n_new, rng, self.std if std is None else std)


def _check_rows(head: TaskSelectorHead, pool: TaskPrototypePool) -> None:
    if head.rows != len(pool):
        raise LifecycleError(f"selector has {head.rows} rows but the pool holds {len(pool)} prototypes")


def select_task_prototype(p_cls, head: TaskSelectorHead, pool: TaskPrototypePool) -> tuple[int, Tensor, Tensor]:
    """(index, chosen prototype, selector logits) for a single pooled feature."""
    _check_rows(head, pool)
    x = T.as_tensor(p_cls).reshape(1, -1)
    logits = head(x)
    idx = int(np.argmax(T.softmax(logits.detach(), axis=-1).data[0]))
    protos = pool.prototypes()
    return idx, protos[idx:idx + 1], logits


def average_task_prototype(pool: TaskPrototypePool) -> Tensor:
    return pool.prototypes().mean(axis=0, keepdims=True)


class TaskPromptModule(Module):
    def __init__(self, dim: int, heads: int, rng: Rng, mlp_ratio: int = 4, std: float = 0.02,
                 enabled: bool = True):
        self.enabled = enabled
        self.pool = TaskPrototypePool(dim, std) if enabled else None
        self.selector = TaskSelectorHead(dim, std) if enabled else None
        self.encoder = TransformerBlock(dim, heads, rng, mlp_ratio, std)

    def grow(self, task: int, rng: Rng) -> None:
        if not self.enabled:
            return
        self.pool.grow(task, rng)
        self.selector.grow(1, rng)

    def __call__(self, z_cls: Tensor) -> tuple[Tensor, np.ndarray | None, Tensor | None]:
        """z_cls (B, M, D) -> (z_tsk (B, M+2, D), selected indices, selector logits)."""
        if not self.enabled:
            return self.encoder(z_cls), None, None
        _check_rows(self.selector, self.pool)
        if z_cls.shape[-1] != self.pool.dim:
            raise DimensionError(f"token dim {z_cls.shape[-1]} != prototype dim {self.pool.dim}")
        logits = self.selector(patch_avg_pool(z_cls))
        # argmax of softmax == argmax of logits; np.argmax breaks ties to the lowest index
        index = np.argmax(logits.data, axis=1)
        protos = self.pool.prototypes()
        z = prepend_prompts(z_cls, gather_rows(protos, index), protos.mean(axis=0, keepdims=True))
        return self.encoder(z), index, logits


def task_prompt_forward(z_cls: Tensor, module: TaskPromptModule) -> Tensor:
    return module(z_cls)[0]
