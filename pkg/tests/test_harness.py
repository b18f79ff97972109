from dataclasses import replace

import numpy as np
import pytest

import oracles
from dpformer import DPFormer
from dpformer.config import ExperimentConfig, profile_config
from dpformer.errors import ConfigError, ContractError, LifecycleError
from dpformer.harness import (LabeledImages, MetricsLog, RehearsalBuffer, SyntheticSpec, buffer_update,
                              forgetting_scores, split_tasks, synthesize)
from dpformer.harness.experiment import (ABLATION_FIELDS, Hooks, ablation_config, build_scenario,
                                         run_ablation, run_experiment)
from dpformer.harness.training import augment, batch_loss, evaluate, train_task
from dpformer.numerics import Rng, Stream


def tiny_config(seed: int = 0, **train) -> ExperimentConfig:
    cfg = profile_config("desk", seed=seed)
    cfg.data = replace(cfg.data, classes=4, train_per_class=8, test_per_class=4)
    cfg.model = replace(cfg.model, depth=1, dim=8, heads=2)
    cfg.train = replace(cfg.train, **{"steps": 2, "epochs": 1, "batch_size": 8, "buffer_capacity": 8, **train})
    return cfg


# ------------------------------------------------------------------ data / split


def test_synthesize_shapes_and_labels():
    train, test = synthesize(SyntheticSpec(10, 20, 5, 8, 1, 0.05), seed=0)
    assert train.images.shape == (200, 1, 8, 8) and train.images.dtype == np.float32
    assert sorted(set(train.labels.tolist())) == list(range(10)) and len(test) == 50
    assert train.images.min() >= 0 and train.images.max() <= 1


def test_synthetic_classes_linearly_separable():
    train, test = synthesize(SyntheticSpec(10, 50, 20, 8, 1, 0.1), seed=1)
    x = train.images.reshape(len(train), -1)
    means = np.stack([x[train.labels == c].mean(0) for c in range(10)])
    xt = test.images.reshape(len(test), -1)
    pred = np.argmin(((xt[:, None] - means[None]) ** 2).sum(-1), axis=1)
    assert (pred == test.labels).mean() == 1.0


def test_split_tasks_disjoint_and_deterministic():
    train, test = synthesize(SyntheticSpec(10, 4, 2, 4, 1, 0.05), seed=0)
    a = split_tasks(train, test, 5, Rng(3, Stream.SPLIT))
    b = split_tasks(train, test, 5, Rng(3, Stream.SPLIT))
    assert np.array_equal(a.class_order, b.class_order)
    seen = set()
    for t, task in enumerate(a.tasks):
        assert task.n_classes == 2 and not seen & set(task.classes.tolist())
        seen |= set(task.classes.tolist())
        assert set(task.train.labels.tolist()) == {2 * t, 2 * t + 1}
        # remapped labels point back at the original classes
        for i in (0, 1):
            orig = a.class_order[2 * t + i]
            assert np.array_equal(train.images[train.labels == orig], task.train.images[task.train.labels == 2 * t + i])
    assert seen == set(range(10))


def test_split_hundred_classes_ten_steps():
    labels = np.repeat(np.arange(100), 1)
    data = LabeledImages(np.zeros((100, 1, 2, 2), np.float32), labels)
    sc = split_tasks(data, data, 10, Rng(0))
    assert [t.n_classes for t in sc.tasks] == [10] * 10


def test_split_not_divisible():
    train, test = synthesize(SyntheticSpec(10, 2, 1, 4, 1, 0.05), seed=0)
    with pytest.raises(ConfigError):
        split_tasks(train, test, 3, Rng(0))


# ------------------------------------------------------------------ buffer


def test_buffer_quotas():
    assert RehearsalBuffer.quotas(100, 10).tolist() == [10] * 10
    assert RehearsalBuffer.quotas(10, 4).tolist() == [3, 3, 2, 2]
    with pytest.raises(ConfigError):
        RehearsalBuffer.quotas(3, 4)


def test_buffer_three_tasks_capacity_twelve():
    train, test = synthesize(SyntheticSpec(6, 10, 2, 4, 1, 0.05), seed=0)
    sc = split_tasks(train, test, 3, Rng(0))
    buf = RehearsalBuffer(12)
    rng = Rng(0, Stream.BUFFER)
    expected = {1: [6, 6], 2: [3, 3, 3, 3], 3: [2] * 6}
    for t, task in enumerate(sc.tasks, start=1):
        buffer_update(buf, task, t, sc.seen_classes(t), rng)
        counts = buf.class_counts()
        assert [counts[c] for c in range(2 * t)] == expected[t]
        assert len(buf) <= 12
        # stored task ids match the class -> task mapping
        assert np.array_equal(buf.tasks, buf.labels // 2 + 1)


def test_buffer_keeps_only_existing_exemplars():
    train, test = synthesize(SyntheticSpec(4, 10, 2, 4, 1, 0.05), seed=0)
    sc = split_tasks(train, test, 2, Rng(0))
    buf = RehearsalBuffer(8)
    buf.update(sc.tasks[0].train, 1, 2, Rng(1))
    first = {tuple(x.ravel()) for x in buf.images}
    buf.update(sc.tasks[1].train, 2, 4, Rng(1))
    old = {tuple(x.ravel()) for x, y in zip(buf.images, buf.labels) if y < 2}
    assert old <= first  # down-sampling never invents or re-draws old samples


# ------------------------------------------------------------------ metrics


def test_forgetting_hand_value():
    log = MetricsLog()
    log.record([0.9], 0.9, 1)
    log.record([0.7, 1.0], 0.85, 1)
    f, mean = forgetting_scores(log, 2)
    assert f.tolist() == pytest.approx([0.2]) and mean == pytest.approx(0.2)


def test_forgetting_never_degrading_is_nonpositive():
    log = MetricsLog()
    for t in range(1, 5):
        log.record(np.linspace(0.5, 0.6, t) + 0.1 * t, 0.5, 1)
    for t in range(2, 5):
        assert (forgetting_scores(log, t)[0] <= 0).all()


def test_forgetting_brute_force_three_tasks():
    g = np.random.default_rng(0)
    history = [g.uniform(0, 1, 2 * t).tolist() for t in range(1, 4)]
    log = MetricsLog()
    for row in history:
        log.record(row, float(np.mean(row)), 1)
    for t in (2, 3):
        f, mean = forgetting_scores(log, t)
        ref_f, ref_mean = oracles.forgetting(history, t)
        assert f.tolist() == ref_f and mean == ref_mean


def test_forgetting_rejects_first_task():
    log = MetricsLog()
    log.record([1.0], 1.0, 1)
    with pytest.raises(ContractError):
        forgetting_scores(log, 1)


def test_metrics_log_validation():
    log = MetricsLog()
    with pytest.raises(ContractError):
        log.record([1.2], 1.0, 1)
    log.record([0.5, 0.5], 0.5, 1)
    with pytest.raises(ContractError):
        log.record([0.5], 0.5, 1)


def test_running_best_nondecreasing():
    log = MetricsLog()
    log.record([0.3, 0.9], 0.6, 1)
    log.record([0.8, 0.1, 0.5, 0.5], 0.5, 1)
    log.record([0.2, 0.4, 0.9, 0.1, 1.0, 1.0], 0.6, 1)
    assert log.best[-1][:4].tolist() == [0.8, 0.9, 0.9, 0.5]


# ------------------------------------------------------------------ training / evaluation


class _ConstantModel:
    def predict(self, images, batch_size=256):
        return np.zeros(len(images), dtype=np.int64)


def test_evaluate_constant_predictor():
    train, test = synthesize(SyntheticSpec(4, 4, 5, 4, 1, 0.05), seed=0)
    sc = split_tasks(train, test, 2, Rng(0))
    per_class, overall = evaluate(_ConstantModel(), sc, 2)
    assert per_class.tolist() == [1.0, 0.0, 0.0, 0.0] and overall == 0.25


def test_evaluate_overall_is_count_weighted_mean():
    cfg = tiny_config()
    sc = build_scenario(cfg)
    model = DPFormer(cfg.model_config(), Rng(0))
    model.begin_task(1, 2, Rng(0))
    model.begin_task(2, 2, Rng(0))
    per_class, overall = evaluate(model, sc, 2)
    counts = np.bincount(sc.test_upto(2).labels)
    assert overall == pytest.approx((per_class * counts).sum() / counts.sum(), abs=1e-15)
    assert ((per_class >= 0) & (per_class <= 1)).all()


def test_zero_lr_leaves_parameters_and_kd_zero():
    cfg = tiny_config(lr=0.0, weight_decay=0.0)
    sc = build_scenario(cfg)
    model = DPFormer(cfg.model_config(), Rng(0))
    model.begin_task(1, 2, Rng(0))
    before = {k: t.data.copy() for k, t in model.state().items()}
    snap = train_task(model, sc, 1, RehearsalBuffer(8), None, cfg.train, cfg.ablation, Rng(0))
    assert all(np.array_equal(before[k], t.data) for k, t in model.state().items())
    x = sc.tasks[0].train.images[:4].astype(np.float64)
    from dpformer.heads import loss_kd
    assert loss_kd(model(x).probs, snap(x).probs.data).item() == 0.0


def test_train_task_lifecycle_errors():
    cfg = tiny_config()
    sc = build_scenario(cfg)
    model = DPFormer(cfg.model_config(), Rng(0))
    with pytest.raises(LifecycleError):
        train_task(model, sc, 1, RehearsalBuffer(8), None, cfg.train, cfg.ablation, Rng(0))
    model.begin_task(1, 2, Rng(0))
    with pytest.raises(LifecycleError):
        train_task(model, sc, 1, RehearsalBuffer(8), model.snapshot(), cfg.train, cfg.ablation, Rng(0))
    model.begin_task(2, 2, Rng(0))
    with pytest.raises(LifecycleError):
        train_task(model, sc, 2, RehearsalBuffer(8), None, cfg.train, cfg.ablation, Rng(0))


def test_batch_loss_requires_snapshot_for_kd():
    cfg = tiny_config()
    model = DPFormer(cfg.model_config(), Rng(0))
    model.begin_task(1, 2, Rng(0))
    model.begin_task(2, 2, Rng(0))
    x = np.zeros((2, 1, 8, 8))
    with pytest.raises(LifecycleError):
        batch_loss(model, None, x, np.array([2, 3]), np.array([1, 1]), cfg.train, cfg.ablation)


def test_forward_before_first_task():
    cfg = tiny_config()
    with pytest.raises(LifecycleError):
        DPFormer(cfg.model_config(), Rng(0))(np.zeros((1, 1, 8, 8)))


def test_tiny_separable_task_learns():
    cfg = tiny_config(epochs=15, lr=2e-3)
    cfg.data = replace(cfg.data, classes=2, train_per_class=20, test_per_class=10)
    cfg.train = replace(cfg.train, steps=1)
    sc = build_scenario(cfg)
    metrics = run_experiment(cfg, scenario=sc)
    model_acc = metrics.overall[0]
    assert model_acc > 0.95


def test_augment_preserves_shape_and_range():
    x = np.random.default_rng(0).uniform(0, 1, (5, 1, 8, 8))
    out = augment(x, Rng(0))
    assert out.shape == x.shape and out.min() >= 0 and out.max() <= 1


# ------------------------------------------------------------------ lifecycle and parameter growth


def test_parameter_growth_closed_form():
    cfg = tiny_config()
    cfg.data = replace(cfg.data, classes=6)
    cfg.train = replace(cfg.train, steps=3)
    d = cfg.model.dim
    counts = []
    model = DPFormer(cfg.model_config(), Rng(0))
    for t in (1, 2, 3):
        model.begin_task(t, 2, Rng(t))
        counts.append(model.num_parameters())
        assert len(model.class_prompt.pool) == 2 * t and len(model.task_prompt.pool) == t
    n_new = 2
    aux_delta = 0  # equal task sizes: the rebuilt aux head has the same shape
    step = d * n_new + d + (d + 1) + (d + 1) * n_new + aux_delta
    assert counts[1] - counts[0] == step and counts[2] - counts[1] == step


def test_prompt_parameter_difference_closed_form():
    cfg = tiny_config()
    both = DPFormer(cfg.model_config(), Rng(0))
    none = DPFormer(replace(cfg.model_config(), class_prompt=False, task_prompt=False), Rng(0))
    d, sizes = cfg.model.dim, [2, 2]
    for t, n in enumerate(sizes, start=1):
        both.begin_task(t, n, Rng(t))
        none.begin_task(t, n, Rng(t))
    expected = sum(d * n for n in sizes) + len(sizes) * d + len(sizes) * (d + 1)
    assert both.num_parameters() - none.num_parameters() == expected
    assert both.prompt_parameter_count() == expected and none.prompt_parameter_count() == 0


def test_encoder_parameter_count_independent_of_task():
    cfg = tiny_config()
    model = DPFormer(cfg.model_config(), Rng(0))
    n0 = model.encoder.num_parameters()
    for t in range(1, 4):
        model.begin_task(t, 2, Rng(t))
        assert model.encoder.num_parameters() == n0


def test_begin_task_out_of_order():
    model = DPFormer(tiny_config().model_config(), Rng(0))
    with pytest.raises(LifecycleError):
        model.begin_task(2, 2, Rng(0))


def test_snapshot_is_immutable_and_stable():
    cfg = tiny_config(epochs=2)
    sc = build_scenario(cfg)
    model = DPFormer(cfg.model_config(), Rng(0))
    model.begin_task(1, 2, Rng(0))
    snap = model.snapshot()
    x = sc.tasks[0].test.images.astype(np.float64)
    before = snap(x).probs.data.copy()
    train_task(model, sc, 1, RehearsalBuffer(8), None, cfg.train, cfg.ablation, Rng(0))
    assert np.array_equal(snap(x).probs.data, before)
    with pytest.raises(ValueError):
        snap.label_head.weight.data[0, 0] = 1.0


def test_frozen_prototypes_unchanged_by_training():
    cfg = tiny_config(epochs=2)
    frozen = {}

    def start(t, model):
        if t >= 2:
            frozen[t] = (model.class_prompt.pool.previous.data.tobytes(),
                         model.task_prompt.pool.previous.data.tobytes())

    def end(t, model, metrics):
        if t in frozen:
            assert frozen[t] == (model.class_prompt.pool.previous.data.tobytes(),
                                 model.task_prompt.pool.previous.data.tobytes())

    run_experiment(cfg, Hooks(start, end))
    assert frozen


# ------------------------------------------------------------------ experiments


def test_single_task_avg_equals_last():
    cfg = tiny_config()
    cfg.train = replace(cfg.train, steps=1)
    m = run_experiment(cfg)
    assert m.n_tasks == 1 and m.avg_accuracy() == m.last_accuracy


def test_run_is_deterministic():
    a, b = run_experiment(tiny_config(seed=3)), run_experiment(tiny_config(seed=3))
    assert a.overall == b.overall
    assert all(np.array_equal(x, y) for x, y in zip(a.accuracies, b.accuracies))


def test_ablation_rows_schema():
    rows = run_ablation(tiny_config(), ["both", "none"], [0])
    assert [r["config"] for r in rows] == ["both", "none"]
    assert all(list(r) == ABLATION_FIELDS for r in rows)
    assert rows[1]["class_prompt"] is False and rows[1]["task_prompt"] is False


def test_ablation_config_flags():
    base = tiny_config()
    assert ablation_config(base, "msa", 4).ablation.attention == "msa"
    assert ablation_config(base, "no_kd", 4).seed == 4
    assert not ablation_config(base, "bce_only", 0).ablation.aux
