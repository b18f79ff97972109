"""Experiment configuration: dataclasses, two profiles and a small INI-style loader.

The text format is line oriented::

    # comment
    seed = 3
    [model]
    depth = 4
    [train]
    lambda = 0.2

Keys may appear before any ``[section]`` header as long as the key name is
unique across sections. Unknown keys and malformed lines are rejected with
the offending line number.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .errors import ConfigError
from .harness.data import SyntheticSpec
from .model import ModelConfig


@dataclass
class DataConfig:
    source: str = "synthetic"  # synthetic | file
    train_path: str = ""
    test_path: str = ""
    classes: int = 10
    train_per_class: int = 200
    test_per_class: int = 50
    image_size: int = 8
    channels: int = 1
    noise_std: float = 0.05
    pattern_seed: int = 0

    def synthetic_spec(self) -> SyntheticSpec:
        return SyntheticSpec(self.classes, self.train_per_class, self.test_per_class,
                             self.image_size, self.channels, self.noise_std, self.pattern_seed)


@dataclass
class ModelSection:
    depth: int = 11
    dim: int = 96
    heads: int = 4
    kernel: int = 7
    patch: int = 3
    stride: int = 0  # 0 = pick from the image size
    tokenizer_layers: int = 0  # 0 = pick from the image size
    mlp_ratio: int = 4
    init_std: float = 0.02


@dataclass
class TrainConfig:
    steps: int = 5
    epochs: int = 500
    batch_size: int = 200
    lr: float = 5e-4
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    lam: float = 0.1
    selector_weight: float = 0.1
    buffer_capacity: int = 2000
    buffer_policy: str = "random"
    augment: bool = True


@dataclass
class AblationConfig:
    class_prompt: bool = True
    task_prompt: bool = True
    kd: bool = True
    aux: bool = True
    attention: str = "dina"
    selector_supervision: bool = True
    aux_at_task1: bool = False


@dataclass
class ExperimentConfig:
    seed: int = 0
    profile: str = "paper"
    out_dir: str = "runs/default"
    data: DataConfig = field(default_factory=DataConfig)
    model: ModelSection = field(default_factory=ModelSection)
    train: TrainConfig = field(default_factory=TrainConfig)
    ablation: AblationConfig = field(default_factory=AblationConfig)

    def validate(self) -> None:
        if self.data.source not in ("synthetic", "file"):
            raise ConfigError(f"data.source must be synthetic or file, got {self.data.source!r}")
        if self.data.source == "file":
            for p in (self.data.train_path, self.data.test_path):
                if not Path(p).is_file():
                    raise ConfigError(f"dataset file not found: {p!r}")
        if self.ablation.attention not in ("msa", "dina"):
            raise ConfigError(f"attention must be msa or dina, got {self.ablation.attention!r}")
        if self.train.buffer_policy != "random":
            raise ConfigError(f"unknown buffer policy {self.train.buffer_policy!r}")
        if self.train.epochs < 0 or self.train.batch_size < 1 or self.train.steps < 1:
            raise ConfigError("epochs >= 0, batch_size >= 1 and steps >= 1 required")
        self.model_config().validate()

    def model_config(self) -> ModelConfig:
        m, d = self.model, self.data
        layers, stride = auto_tokenizer(d.image_size)
        return ModelConfig(
            image_size=d.image_size, channels=d.channels, dim=m.dim, depth=m.depth, heads=m.heads,
            kernel=m.kernel, attention=self.ablation.attention, patch=m.patch,
            stride=m.stride or stride, tokenizer_layers=m.tokenizer_layers or layers,
            mlp_ratio=m.mlp_ratio, init_std=m.init_std,
            class_prompt=self.ablation.class_prompt, task_prompt=self.ablation.task_prompt)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        sections = {f.name: f.type for f in fields(cls)}
        out = cls()
        for key, val in d.items():
            if isinstance(val, dict):
                setattr(out, key, replace(getattr(out, key), **val))
            elif key in sections:
                setattr(out, key, val)
        return out


def auto_tokenizer(image_size: int) -> tuple[int, int]:
    """(layers, stride): two stride-2 stages for >= 32 px, one for >= 8 px, else stride 1."""
    if image_size >= 32:
        return 2, 2
    if image_size >= 8:
        return 1, 2
    return 1, 1


PROFILES = {
    "paper": {"model": {"depth": 11, "dim": 96, "heads": 4},
              "train": {"epochs": 500, "batch_size": 200, "buffer_capacity": 2000, "augment": True}},
    "desk": {"model": {"depth": 4, "dim": 32, "heads": 2},
             "train": {"epochs": 30, "batch_size": 32, "buffer_capacity": 100, "augment": False}},
}


def profile_config(profile: str = "paper", **top) -> ExperimentConfig:
    if profile not in PROFILES:
        raise ConfigError(f"unknown profile {profile!r} (choose from {sorted(PROFILES)})")
    cfg = ExperimentConfig(profile=profile, **top)
    for section, values in PROFILES[profile].items():
        setattr(cfg, section, replace(getattr(cfg, section), **values))
    return cfg


_SECTIONS = ("data", "model", "train", "ablation")
_TOP = ("seed", "profile", "out_dir")
_ALIASES = {"lambda": "lam", "L": "depth", "D": "dim"}


def _key_index() -> dict[str, tuple[str | None, type]]:
    cfg = ExperimentConfig()
    index: dict[str, tuple[str | None, type]] = {k: (None, type(getattr(cfg, k))) for k in _TOP}
    for sec in _SECTIONS:
        for f in fields(getattr(cfg, sec)):
            index.setdefault(f.name, (sec, type(getattr(getattr(cfg, sec), f.name))))
    return index


def _coerce(raw: str, typ: type, where: str):
    if typ is bool:
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{where}: expected a boolean, got {raw!r}")
    try:
        return typ(raw)
    except ValueError:
        raise ConfigError(f"{where}: expected {typ.__name__}, got {raw!r}") from None


def parse_config(text: str, source: str = "<config>", profile: str | None = None) -> ExperimentConfig:
    index = _key_index()
    section: str | None = None
    assignments: list[tuple[str | None, str, str, str]] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        where = f"{source}:{lineno}"
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if stripped.startswith("["):
            if not stripped.endswith("]"):
                raise ConfigError(f"{where}: malformed section header {line.strip()!r}")
            name = stripped[1:-1].strip()
            if name not in _SECTIONS and name != "experiment":
                raise ConfigError(f"{where}: unknown section [{name}]")
            section = None if name == "experiment" else name
            continue
        key, sep, value = stripped.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key or not value:
            raise ConfigError(f"{where}: expected 'key = value', got {line.strip()!r}")
        key = _ALIASES.get(key, key)
        if key not in index:
            raise ConfigError(f"{where}: unknown key {key!r}")
        home, _ = index[key]
        if section is not None and home != section:
            raise ConfigError(f"{where}: key {key!r} does not belong in [{section}]")
        assignments.append((home, key, value, where))

    chosen = profile
    if chosen is None:
        chosen = next((v for h, k, v, _ in assignments if k == "profile"), "paper")
    cfg = profile_config(chosen)
    for home, key, value, where in assignments:
        if key == "profile":
            continue
        typ = index[key][1]
        target = cfg if home is None else getattr(cfg, home)
        setattr(target, key, _coerce(value, typ, where))
    return cfg


def load_config(path: str | Path, profile: str | None = None) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    cfg = parse_config(path.read_text(), str(path), profile)
    cfg.validate()
    return cfg
