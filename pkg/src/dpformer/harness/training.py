"""Per-task training and evaluation."""
from __future__ import annotations

import logging

import numpy as np

from ..config import AblationConfig, TrainConfig
from ..errors import LifecycleError, NumericError
from ..heads import LossWeights, aux_targets, loss_aux, loss_bce, loss_kd, selector_loss, total_loss
from ..model import DPFormer
from ..numerics import AdamW, Rng, Tape, backward
from .scenario import CILScenario, RehearsalBuffer

log = logging.getLogger(__name__)


def augment(images: np.ndarray, rng: Rng) -> np.ndarray:
    """Random horizontal flip and random crop from a 1-pixel zero-padded copy."""
    n, _, h, w = images.shape
    flip = rng.random(n) < 0.5
    out = np.where(flip[:, None, None, None], images[..., ::-1], images)
    padded = np.pad(out, ((0, 0), (0, 0), (1, 1), (1, 1)))
    dy = rng.integers(0, 3, n)
    dx = rng.integers(0, 3, n)
    return np.stack([padded[i, :, dy[i]:dy[i] + h, dx[i]:dx[i] + w] for i in range(n)])


def onehot(labels: np.ndarray, n: int) -> np.ndarray:
    out = np.zeros((len(labels), n))
    out[np.arange(len(labels)), labels] = 1.0
    return out


def batch_loss(model: DPFormer, snapshot: DPFormer | None, x: np.ndarray, y: np.ndarray,
               task_ids: np.ndarray, train: TrainConfig, ablation: AblationConfig):
    """Total training loss for one batch at the model's current task. Call inside a Tape."""
    t = model.task
    n_seen = model.n_classes
    n_new = model.classes_per_task[-1]
    first_new = n_seen - n_new
    weights = LossWeights.for_task(first_new, n_seen, train.lam)
    out = model(x)
    bce = loss_bce(out.probs, onehot(y, n_seen))
    kd = 0.0
    if t >= 2 and ablation.kd:
        if snapshot is None:
            raise LifecycleError("distillation needs the previous task's snapshot")
        teacher = snapshot(x).probs.data
        kd = loss_kd(out.probs[:, :first_new], teacher[:, :first_new])
    aux = 0.0
    if ablation.aux and (t >= 2 or ablation.aux_at_task1):
        aux = loss_aux(out.aux_probs, aux_targets(y, first_new, n_new))
    loss = total_loss(bce, kd, aux, weights)
    if ablation.selector_supervision and out.task_logits is not None and train.selector_weight:
        loss = loss + train.selector_weight * selector_loss(out.task_logits, task_ids)
    return loss


def train_task(model: DPFormer, scenario: CILScenario, t: int, buffer: RehearsalBuffer,
               snapshot: DPFormer | None, train: TrainConfig, ablation: AblationConfig,
               shuffle_rng: Rng, augment_rng: Rng | None = None) -> DPFormer:
    """Train on task ``t`` data plus the rehearsal buffer; return the end-of-task snapshot.

    ``model.begin_task(t, ...)`` must already have run.
    """
    if model.task != t:
        raise LifecycleError(f"model was grown for task {model.task}, asked to train task {t}")
    if (t >= 2) != (snapshot is not None):
        raise LifecycleError("a snapshot is required exactly when t >= 2")
    data = scenario.tasks[t - 1].train
    x, y = data.images, data.labels
    task_ids = np.full(len(y), t - 1)
    if len(buffer):
        x = np.concatenate([x, buffer.images])
        y = np.concatenate([y, buffer.labels])
        task_ids = np.concatenate([task_ids, buffer.tasks - 1])
    x = x.astype(np.float64)
    opt = AdamW(model.named_parameters(), lr=train.lr, betas=(train.beta1, train.beta2),
                eps=train.eps, weight_decay=train.weight_decay)
    for epoch in range(train.epochs):
        order = shuffle_rng.permutation(len(y))
        total = 0.0
        for start in range(0, len(y), train.batch_size):
            idx = order[start:start + train.batch_size]
            xb = x[idx]
            if train.augment and augment_rng is not None:
                xb = augment(xb, augment_rng)
            with Tape() as tape:
                loss = batch_loss(model, snapshot, xb, y[idx], task_ids[idx], train, ablation)
            if not np.isfinite(loss.data).all():
                raise NumericError(f"non-finite loss at task {t}, epoch {epoch}")
            opt.zero_grad()
            backward(loss, tape)
            opt.step()
            total += loss.item() * len(idx)
        log.debug("task %d epoch %d loss %.5f", t, epoch, total / len(y))
    return model.snapshot()


def evaluate(model: DPFormer, scenario: CILScenario, t: int, batch_size: int = 256
             ) -> tuple[np.ndarray, float]:
    """Per-class accuracy over all classes of tasks 1..t, and overall accuracy.

    Uses the label classifier only.
    """
    test = scenario.test_upto(t)
    n = scenario.seen_classes(t)
    pred = model.predict(test.images.astype(np.float64), batch_size)
    correct = np.bincount(test.labels, weights=(pred == test.labels), minlength=n)
    counts = np.bincount(test.labels, minlength=n)
    per_class = np.divide(correct, counts, out=np.zeros(n), where=counts > 0)
    return per_class, float((pred == test.labels).mean())
