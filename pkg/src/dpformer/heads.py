"""Unified classification module and the training losses.

The label classifier covers every class seen so far; the auxiliary classifier
covers the current task's classes plus one leading "earlier task" slot. Both
end in a softmax, and the BCE-style losses are applied to those softmax
outputs component-wise.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .blocks import Linear, Module, patch_avg_pool
from .errors import ContractError, DimensionError
from .numerics import Rng, Tensor
from .numerics import tensor as T

EPS = 1e-12


class LabelClassifier(Linear):
    def __init__(self, dim: int, std: float = 0.02):
        self.weight = Tensor(np.zeros((dim, 0)), requires_grad=True)
        self.bias = Tensor(np.zeros(0), requires_grad=True)
        self.std = std

    def grow(self, n_new: int, rng: Rng, std: float | None = None) -> None:
        super().grow(n_new, rng, self.std if std is None else std)


class AuxClassifier(Linear):
    """Output 0 is the extra class for samples from earlier tasks."""

    def __init__(self, dim: int, n_current: int, rng: Rng, std: float = 0.02):
        super().__init__(dim, n_current + 1, rng, std)


def grow_label_classifier(label: LabelClassifier, new_class_count: int, rng: Rng) -> LabelClassifier:
    label.grow(new_class_count, rng)
    return label


def classify(z_tsk: Tensor, label: LabelClassifier, aux: AuxClassifier | None
             ) -> tuple[Tensor, Tensor | None, Tensor]:
    """Pool all tokens, then softmax both heads. Returns (label probs, aux probs, pooled)."""
    p_tsk = patch_avg_pool(z_tsk)
    if p_tsk.shape[-1] != label.weight.shape[0]:
        raise DimensionError(f"pooled dim {p_tsk.shape[-1]} != classifier input {label.weight.shape[0]}")
    probs = T.softmax(label(p_tsk), axis=-1)
    aux_probs = T.softmax(aux(p_tsk), axis=-1) if aux is not None else None
    return probs, aux_probs, p_tsk


def _check_onehot(y: np.ndarray, shape: tuple[int, ...]) -> None:
    if y.shape != shape:
        raise ContractError(f"targets have shape {y.shape}, predictions {shape}")
    if not (np.isin(y, (0.0, 1.0)).all() and (y.sum(axis=-1) == 1).all()):
        raise ContractError("targets must be one-hot rows")


def binary_cross_entropy(probs: Tensor, onehot: np.ndarray) -> Tensor:
    """Batch mean of the per-sample class-averaged binary cross entropy."""
    onehot = np.asarray(onehot, dtype=np.float64)
    _check_onehot(onehot, probs.shape)
    p = T.clip(probs, EPS, 1.0 - EPS)
    per = onehot * T.log(p) + (1.0 - onehot) * T.log(1.0 - p)
    return -per.mean()


def loss_bce(probs: Tensor, onehot: np.ndarray) -> Tensor:
    return binary_cross_entropy(probs, onehot)


def loss_aux(aux_probs: Tensor, targets: np.ndarray) -> Tensor:
    return binary_cross_entropy(aux_probs, targets)


def aux_targets(labels: np.ndarray, first_new: int, n_new: int) -> np.ndarray:
    """One-hot targets over [ext, new classes...]; labels below ``first_new`` map to ext."""
    labels = np.asarray(labels)
    out = np.zeros((len(labels), n_new + 1))
    slot = np.where(labels >= first_new, labels - first_new + 1, 0)
    if (slot > n_new).any():
        raise ContractError("label beyond the current task's classes")
    out[np.arange(len(labels)), slot] = 1.0
    return out


def loss_kd(current: Tensor, previous: np.ndarray | Tensor) -> Tensor:
    """Mean KL(current || previous) after renormalizing both slices to sum 1."""
    prev = np.asarray(previous.data if isinstance(previous, Tensor) else previous, dtype=np.float64)
    if prev.shape != current.shape:
        raise DimensionError(f"distillation slices differ: {current.shape} vs {prev.shape}")
    if current.shape[-1] == 0:
        raise ContractError("no previous classes to distill (task 1)")
    p = current / current.sum(axis=-1, keepdims=True)
    q = prev / prev.sum(axis=-1, keepdims=True)
    p = T.clip(p, EPS, 1.0)
    q = np.clip(q, EPS, 1.0)
    return (p * (T.log(p) - np.log(q))).sum(axis=-1).mean()


def selector_loss(logits: Tensor, task_index: np.ndarray) -> Tensor:
    """Cross entropy of the task selector against each sample's true task (0-based)."""
    probs = T.clip(T.softmax(logits, axis=-1), EPS, 1.0)
    onehot = np.zeros(logits.shape)
    onehot[np.arange(len(task_index)), task_index] = 1.0
    return -(T.log(probs) * onehot).sum(axis=-1).mean()


@dataclass(frozen=True)
class LossWeights:
    alpha: float
    lam: float = 0.1

    @classmethod
    def for_task(cls, seen_before: int, seen_total: int, lam: float = 0.1) -> "LossWeights":
        return cls(alpha=seen_before / seen_total, lam=lam)

    def __post_init__(self):
        if not 0.0 <= self.alpha < 1.0:
            raise ContractError(f"alpha must lie in [0, 1), got {self.alpha}")


def total_loss(bce, kd, aux, w: LossWeights):
    """(1 - alpha) * bce + alpha * kd + lambda * aux."""
    return (1.0 - w.alpha) * bce + w.alpha * kd + w.lam * aux
