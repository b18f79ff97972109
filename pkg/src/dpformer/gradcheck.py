"""Finite-difference gradient suite over every block, both prompt encoders, both heads,
and the full training loss of a two-task micro-model."""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .blocks import MLP, Attention, LayerNorm, Tokenizer, TokenizerConfig, dina
from .class_prompt import ClassPromptModule
from .config import AblationConfig, TrainConfig
from .heads import AuxClassifier, LabelClassifier, aux_targets, classify, loss_aux, loss_bce
from .model import DPFormer, ModelConfig
from .numerics import Rng, Tensor, check_gradients
from .task_prompt import TaskPromptModule

TOLERANCE = 1e-3
STEP = 1e-5


@dataclass
class GradResult:
    name: str
    max_error: float
    n_values: int

    @property
    def ok(self) -> bool:
        return self.max_error <= TOLERANCE


def _check(name: str, loss_fn, tensors: dict[str, Tensor]) -> GradResult:
    errs = check_gradients(loss_fn, tensors, STEP)
    return GradResult(name, max(errs.values()), sum(t.size for t in tensors.values()))


def _leaf(g: np.random.Generator, shape) -> Tensor:
    return Tensor(g.normal(size=shape), requires_grad=True)


def micro_model(seed: int = 0) -> tuple[DPFormer, DPFormer, np.ndarray, np.ndarray, np.ndarray]:
    """Two-task model (D=8, 3x3 image at stride 1 -> N=9, 3 classes per task) with its
    task-1 snapshot and a mixed batch of current and rehearsal samples."""
    cfg = ModelConfig(image_size=3, channels=1, dim=8, depth=2, heads=2, kernel=3, patch=3, stride=1,
                      tokenizer_layers=1, init_std=0.5)
    rng = Rng(seed)
    model = DPFormer(cfg, rng)
    model.begin_task(1, 3, rng)
    snapshot = model.snapshot()
    model.begin_task(2, 3, rng)
    g = np.random.default_rng(seed)
    x = g.uniform(0, 1, (4, 1, 3, 3))
    y = np.array([3, 5, 0, 2])  # two current-task samples, two rehearsal samples
    task_ids = np.array([1, 1, 0, 0])
    return model, snapshot, x, y, task_ids


def run_gradcheck(seed: int = 0) -> list[GradResult]:
    from .harness.training import batch_loss  # heavy import kept local to the suite

    g = np.random.default_rng(seed)
    rng = Rng(seed)
    out: list[GradResult] = []

    tok = Tokenizer(TokenizerConfig(1, 4, 3, 1, 2), rng, std=0.5)
    img = g.uniform(0, 1, (2, 1, 4, 4))
    w_tok = g.normal(size=(2, 16, 4))
    out.append(_check("tokenizer", lambda: (tok(img)[0] * w_tok).sum(), tok.named_parameters()))

    ln = LayerNorm(6)
    ln.gain.data[:] = g.uniform(0.5, 1.5, 6)
    x_ln = _leaf(g, (2, 5, 6))
    w_ln = g.normal(size=(2, 5, 6))
    out.append(_check("layer_norm", lambda: (ln(x_ln) * w_ln).sum(), {"x": x_ln, **ln.named_parameters()}))

    mlp = MLP(4, rng, std=0.5)
    x_mlp = _leaf(g, (2, 5, 4))
    w_mlp = g.normal(size=(2, 5, 4))
    out.append(_check("mlp", lambda: (mlp(x_mlp) * w_mlp).sum(), {"x": x_mlp, **mlp.named_parameters()}))

    attn = Attention(4, 2, rng, std=0.5)
    x_att = _leaf(g, (2, 9, 4))
    w_att = g.normal(size=(2, 9, 4))
    out.append(_check("msa", lambda: (attn(x_att) * w_att).sum(), {"x": x_att, **attn.named_parameters()}))

    dattn = Attention(4, 2, rng, std=0.5)
    x_d = _leaf(g, (1, 16, 4))
    w_d = g.normal(size=(1, 16, 4))
    out.append(_check("dina", lambda: (dina(x_d, dattn, (4, 4), 3, 1) * w_d).sum(),
                      {"x": x_d, **dattn.named_parameters()}))

    cp = ClassPromptModule(4, 2, rng, std=0.5)
    cp.pool.grow(1, 3, rng)
    cp.pool.current.data *= 20  # wide cosine margins keep the discrete routing fixed under perturbation
    z_c = _leaf(g, (2, 9, 4))
    w_c = g.normal(size=(2, 11, 4))
    out.append(_check("class_prompt_encoder", lambda: (cp(z_c)[0] * w_c).sum(),
                      {"z": z_c, **cp.named_parameters()}))

    tp = TaskPromptModule(4, 2, rng, std=0.5)
    tp.grow(1, rng)
    tp.grow(2, rng)
    tp.selector.weight.data[:] = [[4.0, -4.0]] * 4
    z_t = _leaf(g, (2, 11, 4))
    w_t = g.normal(size=(2, 13, 4))

    def task_loss():
        z, _, logits = tp(z_t)
        return (z * w_t).sum() + (logits * logits).sum()

    out.append(_check("task_prompt_encoder", task_loss, {"z": z_t, **tp.named_parameters()}))

    label = LabelClassifier(4, 0.5)
    label.grow(5, rng)
    aux = AuxClassifier(4, 2, rng, 0.5)
    z_h = _leaf(g, (3, 7, 4))
    y_lab = np.eye(5)[[0, 3, 4]]
    y_aux = aux_targets(np.array([0, 3, 4]), 3, 2)
    out.append(_check("label_head", lambda: loss_bce(classify(z_h, label, aux)[0], y_lab),
                      {"z": z_h, **label.named_parameters()}))
    out.append(_check("aux_head", lambda: loss_aux(classify(z_h, label, aux)[1], y_aux),
                      {"z": z_h, **aux.named_parameters()}))

    model, snapshot, x, y, task_ids = micro_model(seed)
    train, ablation = TrainConfig(), AblationConfig()
    out.append(_check("full_loss_two_task_micro_model",
                      lambda: batch_loss(model, snapshot, x, y, task_ids, train, ablation),
                      model.named_parameters()))
    return out


def main_report(seed: int = 0) -> tuple[bool, str]:
    start = time.perf_counter()
    results = run_gradcheck(seed)
    lines = [f"{r.name:34s} max rel err {r.max_error:.3e}  ({r.n_values} values)  "
             f"{'ok' if r.ok else 'FAIL'}" for r in results]
    ok = all(r.ok for r in results)
    lines.append(f"{'all' if ok else 'NOT all'} within {TOLERANCE:g}; {time.perf_counter() - start:.1f}s")
    return ok, "\n".join(lines)
