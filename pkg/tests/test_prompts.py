import warnings

import numpy as np
import pytest

from dpformer.class_prompt import (ClassPromptModule, ClassPrototypePool, average_class_prototype,
                                   class_prompt_forward, cosine_scores, gather_rows, prepend_prompts,
                                   select_class_prototype)
from dpformer.errors import ContractError, DimensionError, LifecycleError
from dpformer.numerics import Rng, Tape, Tensor, backward, check_gradients
from dpformer.task_prompt import (TaskPromptModule, TaskPrototypePool, TaskSelectorHead,
                                  average_task_prototype, select_task_prototype, task_prompt_forward)


def _pool_with(rows: np.ndarray) -> ClassPrototypePool:
    pool = ClassPrototypePool(rows.shape[1])
    pool.grow(1, len(rows), Rng(0))
    pool.current.data[:] = rows
    return pool


# ------------------------------------------------------------------ class pool


def test_class_selection_is_scale_invariant():
    pool = _pool_with(np.eye(2))
    idx, proto = select_class_prototype(np.array([5.0, 0.0]), pool)
    assert idx == 0 and np.array_equal(proto.data, [[1.0, 0.0]])


def test_class_selection_ties_go_to_lowest_index():
    pool = _pool_with(np.array([[1.0, 0.0], [2.0, 0.0], [0.0, 1.0]]))
    assert select_class_prototype(np.array([3.0, 0.0]), pool)[0] == 0


def test_class_selection_brute_force():
    g = np.random.default_rng(0)
    for _ in range(20):
        rows = g.normal(size=(7, 5))
        p = g.normal(size=5)
        pool = _pool_with(rows)
        best = max(range(7), key=lambda i: (rows[i] @ p) / (np.linalg.norm(rows[i]) * np.linalg.norm(p)))
        idx, proto = select_class_prototype(p, pool)
        assert idx == best and np.array_equal(proto.data[0], rows[best])


def test_class_selection_spans_previous_and_current():
    pool = ClassPrototypePool(2)
    pool.grow(1, 1, Rng(0))
    pool.current.data[:] = [[1.0, 0.0]]
    pool.grow(2, 1, Rng(0))
    pool.current.data[:] = [[0.0, 1.0]]
    assert select_class_prototype(np.array([0.1, 1.0]), pool)[0] == 1
    assert select_class_prototype(np.array([1.0, 0.1]), pool)[0] == 0


def test_zero_norm_prototype_excluded_with_warning():
    pool = _pool_with(np.array([[0.0, 0.0], [-1.0, 0.0]]))
    with pytest.warns(UserWarning):
        assert select_class_prototype(np.array([1.0, 0.0]), pool)[0] == 1


def test_all_zero_prototypes_rejected():
    with pytest.raises(ContractError):
        cosine_scores(np.ones((1, 2)), np.zeros((3, 2)))


def test_zero_norm_query_rejected():
    with pytest.raises(ContractError):
        select_class_prototype(np.zeros(2), _pool_with(np.eye(2)))


def test_selection_dimension_mismatch():
    with pytest.raises(DimensionError):
        select_class_prototype(np.ones(3), _pool_with(np.eye(2)))


def test_average_class_prototype_oracle():
    rows = np.random.default_rng(1).normal(size=(9, 6))
    avg = average_class_prototype(_pool_with(rows)).data[0]
    expected = np.zeros(6)
    for r in rows:
        expected += r
    assert np.abs(avg - expected / 9).max() <= 1e-15


def test_empty_pool_rejected():
    with pytest.raises(ContractError):
        average_class_prototype(ClassPrototypePool(4))
    with pytest.raises(ContractError):
        average_task_prototype(TaskPrototypePool(4))


def test_class_pool_lifecycle():
    pool = ClassPrototypePool(4)
    pool.grow(1, 2, Rng(0))
    assert (pool.n_previous, pool.n_current) == (0, 2)
    first = pool.current.data.copy()
    pool.grow(2, 2, Rng(1))
    assert (pool.n_previous, pool.n_current) == (2, 2)
    assert pool.previous.data.tobytes() == first.tobytes()
    assert not pool.previous.requires_grad and pool.current.requires_grad
    assert pool.provenance == [1, 1, 2, 2]
    with pytest.raises(LifecycleError):
        pool.grow(2, 2, Rng(2))
    with pytest.raises(LifecycleError):
        pool.grow(4, 2, Rng(2))


def test_gather_rows_routes_gradient_to_selected_rows():
    table = Tensor(np.random.default_rng(2).normal(size=(4, 3)), requires_grad=True)
    with Tape() as tape:
        loss = gather_rows(table, np.array([2, 2, 0])).sum()
    backward(loss, tape)
    assert np.array_equal(table.grad, [[1, 1, 1], [0, 0, 0], [2, 2, 2], [0, 0, 0]])


def test_prepend_prompts_order_and_shape():
    tokens = Tensor(np.zeros((2, 3, 4)))
    sel = Tensor(np.ones((2, 4)))
    avg = Tensor(np.full((1, 4), 2.0))
    z = prepend_prompts(tokens, sel, avg).data
    assert z.shape == (2, 5, 4)
    assert (z[:, 0] == 1).all() and (z[:, 1] == 2).all() and (z[:, 2:] == 0).all()
    with pytest.raises(DimensionError):
        prepend_prompts(tokens, Tensor(np.ones((2, 3))), avg)


def test_class_prompt_forward_shape_and_gradients():
    mod = ClassPromptModule(4, 2, Rng(3), std=0.5)
    mod.pool.grow(1, 3, Rng(4))
    mod.pool.current.data *= 25  # well-separated prototypes keep the argmax stable under FD
    z = Tensor(np.random.default_rng(5).normal(size=(2, 9, 4)), requires_grad=True)
    assert class_prompt_forward(z, mod).shape == (2, 11, 4)
    w = np.random.default_rng(6).normal(size=(2, 11, 4))
    params = {"z": z, **mod.named_parameters()}
    errs = check_gradients(lambda: (mod(z)[0] * w).sum(), params)
    assert max(errs.values()) < 1e-3
    assert np.abs(mod.pool.current.grad).sum() > 0


def test_disabled_class_prompt_keeps_sequence_length():
    mod = ClassPromptModule(4, 2, Rng(0), enabled=False)
    out, idx = mod(Tensor(np.ones((1, 9, 4))))
    assert out.shape == (1, 9, 4) and idx is None and mod.pool is None


# ------------------------------------------------------------------ task pool


def test_task_pool_lifecycle():
    pool = TaskPrototypePool(4)
    for t in range(1, 5):
        before = None if pool.previous is None else pool.previous.data.tobytes()
        pool.grow(t, Rng(t))
        assert len(pool) == t == pool.task
        assert pool.current.shape == (1, 4) and pool.current.requires_grad
        if before is not None:
            assert pool.previous.data[: t - 2].tobytes() == before
    with pytest.raises(LifecycleError):
        pool.grow(3, Rng(0))


def test_select_task_prototype_argmax():
    pool = TaskPrototypePool(2)
    head = TaskSelectorHead(2)
    for t in (1, 2, 3):
        pool.grow(t, Rng(t))
        head.grow(1, Rng(t))
    head.weight.data[:] = [[0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
    head.bias.data[:] = 0.0
    idx, proto, logits = select_task_prototype(np.array([3.0, 1.0]), head, pool)
    assert idx == 1 and logits.shape == (1, 3)
    assert np.array_equal(proto.data, pool.prototypes().data[1:2])


def test_select_task_ties_lowest_index():
    pool = TaskPrototypePool(2)
    head = TaskSelectorHead(2)
    for t in (1, 2):
        pool.grow(t, Rng(t))
        head.grow(1, Rng(t))
    head.weight.data[:] = 0.0
    head.bias.data[:] = 0.0
    assert select_task_prototype(np.ones(2), head, pool)[0] == 0


def test_selector_row_mismatch():
    pool = TaskPrototypePool(2)
    head = TaskSelectorHead(2)
    pool.grow(1, Rng(0))
    with pytest.raises(LifecycleError):
        select_task_prototype(np.ones(2), head, pool)


def test_average_task_prototype_oracle():
    pool = TaskPrototypePool(5)
    for t in range(1, 7):
        pool.grow(t, Rng(t))
    rows = pool.prototypes().data
    expected = np.zeros(5)
    for r in rows:
        expected += r
    assert np.abs(average_task_prototype(pool).data[0] - expected / 6).max() <= 1e-15


def test_task_prompt_forward_and_gradients():
    mod = TaskPromptModule(4, 2, Rng(7), std=0.5)
    for t in (1, 2):
        mod.grow(t, Rng(10 + t))
    mod.selector.weight.data[:] = [[5.0, -5.0]] * 4  # decisive routing for stable FD
    z = Tensor(np.random.default_rng(8).normal(size=(2, 11, 4)), requires_grad=True)
    assert task_prompt_forward(z, mod).shape == (2, 13, 4)
    w = np.random.default_rng(9).normal(size=(2, 13, 4))

    def loss():
        out, _, logits = mod(z)
        return (out * w).sum() + (logits * logits).sum()

    errs = check_gradients(loss, {"z": z, **mod.named_parameters()})
    assert max(errs.values()) < 1e-3


def test_task_prompt_grows_selector_with_pool():
    mod = TaskPromptModule(4, 2, Rng(0))
    for t in range(1, 4):
        mod.grow(t, Rng(t))
        assert mod.selector.rows == len(mod.pool) == t


def test_disabled_task_prompt():
    mod = TaskPromptModule(4, 2, Rng(0), enabled=False)
    mod.grow(1, Rng(0))
    out, idx, logits = mod(Tensor(np.ones((1, 5, 4))))
    assert out.shape == (1, 5, 4) and idx is None and logits is None


def test_no_warnings_in_normal_selection():
    pool = _pool_with(np.random.default_rng(3).normal(size=(4, 3)))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        select_class_prototype(np.ones(3), pool)
