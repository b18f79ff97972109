"""Full class-incremental runs and ablation grids."""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Callable

from ..config import ExperimentConfig
from ..model import DPFormer
from ..numerics import Rng, Stream
from .data import LabeledImages, read_dpfd, synthesize
from .metrics import MetricsLog
from .scenario import CILScenario, RehearsalBuffer, split_tasks
from .training import evaluate, train_task

log = logging.getLogger(__name__)


def load_data(cfg: ExperimentConfig) -> tuple[LabeledImages, LabeledImages]:
    if cfg.data.source == "file":
        return read_dpfd(cfg.data.train_path), read_dpfd(cfg.data.test_path)
    return synthesize(cfg.data.synthetic_spec(), cfg.seed)


def build_scenario(cfg: ExperimentConfig) -> CILScenario:
    train, test = load_data(cfg)
    return split_tasks(train, test, cfg.train.steps, Rng(cfg.seed, Stream.SPLIT))


@dataclass
class Hooks:
    on_task_start: Callable[[int, DPFormer], None] | None = None
    on_task_end: Callable[[int, DPFormer, MetricsLog], None] | None = None


def run_experiment(cfg: ExperimentConfig, hooks: Hooks | None = None,
                   scenario: CILScenario | None = None) -> MetricsLog:
    """grow -> train -> evaluate -> update buffer -> snapshot, for every task."""
    cfg.validate()
    hooks = hooks or Hooks()
    scenario = scenario or build_scenario(cfg)
    init = Rng(cfg.seed, Stream.INIT)
    shuffle = Rng(cfg.seed, Stream.SHUFFLE)
    buffer_rng = Rng(cfg.seed, Stream.BUFFER)
    augment_rng = Rng(cfg.seed, Stream.AUGMENT)
    model = DPFormer(cfg.model_config(), init)
    buffer = RehearsalBuffer(cfg.train.buffer_capacity)
    metrics = MetricsLog()
    snapshot = None
    for t, task in enumerate(scenario.tasks, start=1):
        model.begin_task(t, task.n_classes, init)
        if hooks.on_task_start:
            hooks.on_task_start(t, model)
        snapshot = train_task(model, scenario, t, buffer, snapshot, cfg.train, cfg.ablation,
                              shuffle, augment_rng)
        per_class, overall = evaluate(model, scenario, t)
        metrics.record(per_class, overall, model.num_parameters(), model.prompt_parameter_count())
        buffer.update(task.train, t, model.n_classes, buffer_rng)
        log.info("task %d/%d overall accuracy %.4f", t, scenario.n_tasks, overall)
        if hooks.on_task_end:
            hooks.on_task_end(t, model, metrics)
    return metrics


ABLATIONS = {
    # prompt modules
    "both": {},
    "class_only": {"task_prompt": False},
    "task_only": {"class_prompt": False},
    "none": {"class_prompt": False, "task_prompt": False},
    # losses
    "no_kd": {"kd": False},
    "no_aux": {"aux": False},
    "bce_only": {"kd": False, "aux": False},
    # encoder attention
    "msa": {"attention": "msa"},
}

GRIDS = {
    "prompts": ["both", "class_only", "task_only", "none"],
    "losses": ["both", "no_kd", "no_aux", "bce_only"],
    "attention": ["both", "msa"],
}


def ablation_config(base: ExperimentConfig, name: str, seed: int) -> ExperimentConfig:
    cfg = replace(base, seed=seed, ablation=replace(base.ablation, **ABLATIONS[name]))
    return cfg


def run_ablation(base: ExperimentConfig, names: list[str], seeds: list[int]) -> list[dict]:
    """One metrics row per (configuration, seed); schema is fixed by ABLATION_FIELDS."""
    rows = []
    for name in names:
        for seed in seeds:
            cfg = ablation_config(base, name, seed)
            m = run_experiment(cfg)
            a = cfg.ablation
            rows.append({"config": name, "seed": seed, "class_prompt": a.class_prompt,
                         "task_prompt": a.task_prompt, "kd": a.kd, "aux": a.aux,
                         "attention": a.attention, "avg_acc": m.avg_accuracy(),
                         "last_acc": m.last_accuracy, "params": m.params[-1]})
    return rows


ABLATION_FIELDS = ["config", "seed", "class_prompt", "task_prompt", "kd", "aux", "attention",
                   "avg_acc", "last_acc", "params"]
