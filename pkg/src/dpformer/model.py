"""DPFormer assembly: tokenizer -> encoder -> class prompt -> task prompt -> heads."""
from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np

from .blocks import Module, Tokenizer, TokenizerConfig
from .class_prompt import ClassPromptModule
from .encoder import EncoderStack
from .errors import ConfigError, LifecycleError
from .heads import AuxClassifier, LabelClassifier, classify
from .numerics import Rng, Tensor
from .task_prompt import TaskPromptModule


@dataclass(frozen=True)
class ModelConfig:
    image_size: int = 32
    channels: int = 3
    dim: int = 96
    depth: int = 11
    heads: int = 4
    kernel: int = 7
    attention: str = "dina"
    patch: int = 3
    stride: int = 2
    tokenizer_layers: int = 2
    mlp_ratio: int = 4
    init_std: float = 0.02
    class_prompt: bool = True
    task_prompt: bool = True

    def validate(self) -> None:
        if self.dim % self.heads:
            raise ConfigError(f"dim {self.dim} not divisible by {self.heads} heads")
        if self.attention not in ("msa", "dina"):
            raise ConfigError(f"attention must be msa or dina, got {self.attention!r}")
        if self.kernel % 2 == 0 or self.kernel < 1:
            raise ConfigError(f"kernel must be a positive odd number, got {self.kernel}")
        if self.image_size < self.patch:
            raise ConfigError("image smaller than the tokenizer patch")

    @property
    def tokenizer(self) -> TokenizerConfig:
        return TokenizerConfig(self.channels, self.dim, self.patch, self.stride, self.tokenizer_layers)


@dataclass
class ForwardOutput:
    probs: Tensor
    aux_probs: Tensor | None
    task_logits: Tensor | None
    class_index: np.ndarray | None
    task_index: np.ndarray | None
    pooled: Tensor


class DPFormer(Module):
    def __init__(self, cfg: ModelConfig, rng: Rng):
        cfg.validate()
        self.cfg = cfg
        std = cfg.init_std
        self.tokenizer = Tokenizer(cfg.tokenizer, rng, std)
        self.encoder = EncoderStack(cfg.depth, cfg.dim, cfg.heads, rng, cfg.attention,
                                    cfg.kernel, cfg.mlp_ratio, std)
        self.class_prompt = ClassPromptModule(cfg.dim, cfg.heads, rng, cfg.mlp_ratio, std, cfg.class_prompt)
        self.task_prompt = TaskPromptModule(cfg.dim, cfg.heads, rng, cfg.mlp_ratio, std, cfg.task_prompt)
        self.label_head = LabelClassifier(cfg.dim, std)
        self.aux_head: AuxClassifier | None = None
        self.task = 0
        self.classes_per_task: list[int] = []

    @property
    def n_classes(self) -> int:
        return sum(self.classes_per_task)

    def begin_task(self, task: int, n_new: int, rng: Rng) -> None:
        """Grow pools and heads for ``task`` (1-based). Must be called once per task, in order."""
        if task != self.task + 1:
            raise LifecycleError(f"model is at task {self.task}; cannot begin task {task}")
        if self.class_prompt.enabled:
            self.class_prompt.pool.grow(task, n_new, rng)
        self.task_prompt.grow(task, rng)
        self.label_head.grow(n_new, rng)
        self.aux_head = AuxClassifier(self.cfg.dim, n_new, rng, self.cfg.init_std)
        self.classes_per_task.append(n_new)
        self.task = task

    def features(self, images) -> tuple[Tensor, np.ndarray | None, np.ndarray | None, Tensor | None]:
        z0, hw = self.tokenizer(images)
        z_l = self.encoder(z0, hw)
        z_cls, cls_idx = self.class_prompt(z_l)
        z_tsk, tsk_idx, logits = self.task_prompt(z_cls)
        return z_tsk, cls_idx, tsk_idx, logits

    def __call__(self, images) -> ForwardOutput:
        if self.task == 0:
            raise LifecycleError("begin_task() must run before the first forward pass")
        z_tsk, cls_idx, tsk_idx, logits = self.features(images)
        probs, aux_probs, pooled = classify(z_tsk, self.label_head, self.aux_head)
        return ForwardOutput(probs, aux_probs, logits, cls_idx, tsk_idx, pooled)

    def predict_proba(self, images: np.ndarray, batch_size: int = 256) -> np.ndarray:
        """Label-classifier probabilities, computed off-tape in batches."""
        out = [self(images[i:i + batch_size]).probs.data for i in range(0, len(images), batch_size)]
        return np.concatenate(out, axis=0) if out else np.zeros((0, self.n_classes))

    def predict(self, images: np.ndarray, batch_size: int = 256) -> np.ndarray:
        return np.argmax(self.predict_proba(images, batch_size), axis=1)

    def snapshot(self) -> "DPFormer":
        """Deep, read-only copy of the model (used as the distillation teacher)."""
        snap = copy.deepcopy(self)
        for t in snap.state().values():
            t.requires_grad = False
            t.grad = None
            t.data.setflags(write=False)
        return snap

    def prompt_parameter_count(self) -> int:
        n = 0
        if self.class_prompt.enabled:
            n += self.class_prompt.pool.num_parameters()
        if self.task_prompt.enabled:
            n += self.task_prompt.pool.num_parameters() + self.task_prompt.selector.num_parameters()
        return n
