"""Accuracy history and forgetting scores."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import ContractError


@dataclass
class MetricsLog:
    """Per-task evaluation record. Index ``t - 1`` holds the model after task ``t``."""
    accuracies: list[np.ndarray] = field(default_factory=list)  # per-class acc over C^{1:t}
    overall: list[float] = field(default_factory=list)
    params: list[int] = field(default_factory=list)
    prompt_params: list[int] = field(default_factory=list)
    best: list[np.ndarray] = field(default_factory=list)  # running max of per-class acc

    @property
    def n_tasks(self) -> int:
        return len(self.overall)

    def record(self, per_class: np.ndarray, overall: float, params: int, prompt_params: int = 0) -> None:
        per_class = np.asarray(per_class, dtype=np.float64)
        if ((per_class < 0) | (per_class > 1)).any():
            raise ContractError("accuracies must lie in [0, 1]")
        prev = self.best[-1] if self.best else np.zeros(0)
        if len(per_class) < len(prev):
            raise ContractError("class count cannot shrink between tasks")
        best = per_class.copy()
        best[: len(prev)] = np.maximum(prev, per_class[: len(prev)])
        self.accuracies.append(per_class)
        self.overall.append(float(overall))
        self.params.append(int(params))
        self.prompt_params.append(int(prompt_params))
        self.best.append(best)

    def avg_accuracy(self, t: int | None = None) -> float:
        t = self.n_tasks if t is None else t
        return float(np.mean(self.overall[:t]))

    @property
    def last_accuracy(self) -> float:
        return self.overall[-1]


def forgetting_scores(log: MetricsLog, t: int) -> tuple[np.ndarray, float]:
    """Per-class forgetting after task ``t`` for classes of tasks 1..t-1, and their mean.

    The best accuracy of a class is taken over models 1..t-1 only.
    """
    if t < 2:
        raise ContractError("forgetting is defined from the second task on")
    if t > log.n_tasks:
        raise ContractError(f"no accuracies recorded for task {t}")
    n_prev = len(log.accuracies[t - 2])
    f = log.best[t - 2][:n_prev] - log.accuracies[t - 1][:n_prev]
    return f, math.fsum(f) / n_prev  # correctly rounded, independent of summation order
