"""Class-incremental task streams and the rehearsal buffer."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, ContractError
from ..numerics import Rng
from .data import LabeledImages


@dataclass
class TaskData:
    classes: np.ndarray  # original labels of this task's classes
    first_index: int  # global index of the first class of this task
    train: LabeledImages  # labels remapped to global indices
    test: LabeledImages

    @property
    def n_classes(self) -> int:
        return len(self.classes)


@dataclass
class CILScenario:
    tasks: list[TaskData]
    class_order: np.ndarray  # class_order[index] = original label

    @property
    def n_tasks(self) -> int:
        return len(self.tasks)

    def seen_classes(self, t: int) -> int:
        return sum(task.n_classes for task in self.tasks[:t])

    def test_upto(self, t: int) -> LabeledImages:
        parts = [task.test for task in self.tasks[:t]]
        return LabeledImages(np.concatenate([p.images for p in parts]),
                             np.concatenate([p.labels for p in parts]))


def split_tasks(train: LabeledImages, test: LabeledImages, steps: int, rng: Rng) -> CILScenario:
    """Shuffle the class set and cut it into ``steps`` equal disjoint tasks.

    Labels are remapped so that global class index follows task order, which
    is the column order of the growing label classifier.
    """
    labels = np.unique(train.labels)
    if steps < 1 or len(labels) % steps:
        raise ConfigError(f"{len(labels)} classes cannot be split into {steps} equal tasks")
    order = labels[rng.permutation(len(labels))]
    remap = {int(c): i for i, c in enumerate(order)}
    per = len(labels) // steps
    tasks = []
    for t in range(steps):
        classes = order[t * per:(t + 1) * per]
        tasks.append(TaskData(classes, t * per, _take(train, classes, remap), _take(test, classes, remap)))
    return CILScenario(tasks, order)


def _take(data: LabeledImages, classes: np.ndarray, remap: dict[int, int]) -> LabeledImages:
    sel = np.isin(data.labels, classes)
    return LabeledImages(data.images[sel], np.array([remap[int(c)] for c in data.labels[sel]], dtype=np.int64))


@dataclass
class RehearsalBuffer:
    """Fixed-capacity, class-balanced exemplar store filled by uniform sampling."""
    capacity: int
    images: np.ndarray | None = None
    labels: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    tasks: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def __len__(self) -> int:
        return len(self.labels)

    def class_counts(self) -> dict[int, int]:
        cls, cnt = np.unique(self.labels, return_counts=True)
        return dict(zip(cls.tolist(), cnt.tolist()))

    @staticmethod
    def quotas(capacity: int, n_classes: int) -> np.ndarray:
        """floor(capacity / n) each, remainder handed to the lowest class indices."""
        if capacity < n_classes:
            raise ConfigError(f"buffer capacity {capacity} < {n_classes} classes")
        q = np.full(n_classes, capacity // n_classes)
        q[: capacity % n_classes] += 1
        return q

    def update(self, data: LabeledImages, task: int, n_seen: int, rng: Rng) -> None:
        """Rebalance for ``n_seen`` classes and add exemplars of ``task`` (1-based)."""
        quota = self.quotas(self.capacity, n_seen)
        keep_x, keep_y, keep_t = [], [], []
        old_classes = set(np.unique(self.labels).tolist())
        for c in range(n_seen):
            if c in old_classes:
                idx = np.flatnonzero(self.labels == c)
                src_x, src_t = self.images, self.tasks
            else:
                idx = np.flatnonzero(data.labels == c)
                src_x, src_t = data.images, None
            if len(idx) > quota[c]:
                idx = idx[rng.choice(len(idx), int(quota[c]))]
            keep_x.append(src_x[idx])
            keep_y.append(np.full(len(idx), c, dtype=np.int64))
            keep_t.append(src_t[idx] if src_t is not None else np.full(len(idx), task, dtype=np.int64))
        self.images = np.concatenate(keep_x)
        self.labels = np.concatenate(keep_y)
        self.tasks = np.concatenate(keep_t)
        if len(self) > self.capacity:
            raise ContractError("buffer overflow")  # unreachable by construction


def buffer_update(buffer: RehearsalBuffer, task_data: TaskData, task: int, n_seen: int,
                  rng: Rng) -> RehearsalBuffer:
    buffer.update(task_data.train, task, n_seen, rng)
    return buffer
