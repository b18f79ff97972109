"""Checkpoint persistence: one ``.npz`` holding every tensor plus a JSON metadata record.

Restoring replays ``begin_task`` for each recorded task so pools and heads have
the right shapes, then copies the stored arrays in bit-for-bit.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import ExperimentConfig
from .errors import DimensionError, FormatError, IncompatibleCheckpointError
from .model import DPFormer
from .numerics import AdamWState, Rng, Stream

FORMAT_VERSION = 1
_META = "__meta__"
_OPT = "__opt__"


@dataclass
class Checkpoint:
    config: ExperimentConfig
    classes_per_task: list[int]
    tensors: dict[str, np.ndarray]
    provenance: list[int] = field(default_factory=list)
    optimizer: AdamWState | None = None
    rng_states: dict[str, dict] = field(default_factory=dict)

    @property
    def task(self) -> int:
        return len(self.classes_per_task)


def save_checkpoint(path: str | Path, model: DPFormer, config: ExperimentConfig,
                    optimizer: AdamWState | None = None, rngs: dict[str, Rng] | None = None) -> None:
    provenance = model.class_prompt.pool.provenance if model.class_prompt.enabled else []
    meta = {
        "format_version": FORMAT_VERSION,
        "config": config.to_dict(),
        "task": model.task,
        "classes_per_task": list(model.classes_per_task),
        "provenance": list(provenance),
        "shapes": {k: list(t.shape) for k, t in model.state().items()},
        "rng_states": {k: r.get_state() for k, r in (rngs or {}).items()},
    }
    arrays = {k: t.data for k, t in model.state().items()}
    if optimizer is not None:
        meta["optimizer"] = {"lr": optimizer.lr, "weight_decay": optimizer.weight_decay,
                             "beta1": optimizer.beta1, "beta2": optimizer.beta2,
                             "eps": optimizer.eps, "step": optimizer.step}
        for k, v in optimizer.exp_avg.items():
            arrays[f"{_OPT}m/{k}"] = v
        for k, v in optimizer.exp_avg_sq.items():
            arrays[f"{_OPT}v/{k}"] = v
    arrays[_META] = np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def read_checkpoint(path: str | Path) -> Checkpoint:
    try:
        with np.load(path, allow_pickle=False) as npz:
            arrays = {k: npz[k] for k in npz.files}
    except (OSError, ValueError) as exc:
        raise FormatError(f"{path}: not a readable checkpoint ({exc})") from None
    if _META not in arrays:
        raise FormatError(f"{path}: checkpoint metadata missing")
    meta = json.loads(arrays.pop(_META).tobytes().decode())
    version = meta.get("format_version")
    if version != FORMAT_VERSION:
        raise IncompatibleCheckpointError(
            f"{path}: checkpoint format {version} is not supported (expected {FORMAT_VERSION})")
    opt = None
    if "optimizer" in meta:
        o = meta["optimizer"]
        opt = AdamWState(lr=o["lr"], weight_decay=o["weight_decay"], beta1=o["beta1"],
                         beta2=o["beta2"], eps=o["eps"], step=o["step"])
    tensors = {}
    for k, v in arrays.items():
        if k.startswith(_OPT + "m/"):
            opt.exp_avg[k[len(_OPT) + 2:]] = v
        elif k.startswith(_OPT + "v/"):
            opt.exp_avg_sq[k[len(_OPT) + 2:]] = v
        else:
            tensors[k] = v
    return Checkpoint(ExperimentConfig.from_dict(meta["config"]), meta["classes_per_task"], tensors,
                      meta.get("provenance", []), opt, meta.get("rng_states", {}))


def load_into(model: DPFormer, ckpt: Checkpoint) -> DPFormer:
    """Copy checkpoint tensors into an already-grown ``model``; shapes must agree exactly."""
    state = model.state()
    missing = sorted(set(state) - set(ckpt.tensors))
    extra = sorted(set(ckpt.tensors) - set(state))
    if missing or extra:
        raise DimensionError(f"checkpoint/model parameter sets differ: missing {missing}, unexpected {extra}")
    for name, t in state.items():
        arr = ckpt.tensors[name]
        if arr.shape != t.shape:
            raise DimensionError(f"parameter {name!r}: checkpoint shape {arr.shape} != model shape {t.shape}")
    for name, t in state.items():
        t.data = np.array(ckpt.tensors[name], dtype=np.float64)
    if model.class_prompt.enabled:
        model.class_prompt.pool.provenance = list(ckpt.provenance)
    return model


def restore_model(ckpt: Checkpoint) -> DPFormer:
    """Rebuild a model of the checkpoint's profile and task, then load its tensors."""
    cfg = ckpt.config
    rng = Rng(cfg.seed, Stream.INIT)
    model = DPFormer(cfg.model_config(), rng)
    for t, n in enumerate(ckpt.classes_per_task, start=1):
        model.begin_task(t, n, rng)
    return load_into(model, ckpt)


def load_checkpoint(path: str | Path, model: DPFormer | None = None) -> DPFormer:
    ckpt = read_checkpoint(path)
    return restore_model(ckpt) if model is None else load_into(model, ckpt)
