"""Adam against a hand-rolled reference trajectory."""

import numpy as np
import pytest

from kgrec.autodiff import Tensor
from kgrec.optim import AdamState, adam_step


def _reference_adam(data, grads_seq, lr, b1=0.9, b2=0.999, eps=1e-8):
    x = data.copy()
    m = np.zeros_like(x)
    v = np.zeros_like(x)
    for t, g in enumerate(grads_seq, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        x = x - lr * (m / (1 - b1**t)) / (np.sqrt(v / (1 - b2**t)) + eps)
    return x


def test_first_step_is_signed_learning_rate():
    # bias correction makes step one lr * g / (|g| + eps), ~ lr * sign(g)
    p = Tensor(np.array([1.0, -2.0, 3.0]), requires_grad=True)
    g = np.array([0.5, -0.25, 4.0])
    state = AdamState(learning_rate=0.01)
    adam_step([p], {p: g}, state)
    want = np.array([1.0, -2.0, 3.0]) - 0.01 * np.sign(g)
    assert np.max(np.abs(p.data - want)) < 1e-7


def test_zero_gradient_leaves_parameter_bit_identical():
    values = np.array([0.3, -1.5])
    p = Tensor(values, requires_grad=True)
    before = p.data.copy()
    state = AdamState()
    adam_step([p], {p: np.zeros(2)}, state)
    assert np.array_equal(p.data, before)


def test_ten_step_trajectory_matches_reference():
    rng = np.random.default_rng(11)
    for trial in range(5):
        shape = tuple(rng.integers(1, 4, size=2))
        start = rng.standard_normal(shape)
        grads_seq = [rng.standard_normal(shape) for _ in range(10)]
        p = Tensor(start, requires_grad=True)
        state = AdamState(learning_rate=0.05)
        for g in grads_seq:
            adam_step([p], {p: g}, state)
        want = _reference_adam(start, grads_seq, lr=0.05)
        assert np.max(np.abs(p.data - want)) < 1e-12, f"trial {trial}"


def test_shared_state_tracks_each_parameter_separately():
    a = Tensor(np.zeros(2), requires_grad=True)
    b = Tensor(np.zeros(3), requires_grad=True)
    state = AdamState(learning_rate=0.1)
    adam_step([a, b], {a: np.ones(2), b: -np.ones(3)}, state)
    assert state.step == 1
    assert a in state.moments and b in state.moments
    assert np.all(a.data < 0) and np.all(b.data > 0)


def test_rejections_leave_parameters_untouched():
    a = Tensor(np.array([1.0]), requires_grad=True)
    b = Tensor(np.array([2.0]), requires_grad=True)
    state = AdamState()
    with pytest.raises(ValueError):
        adam_step([a, b], {a: np.array([1.0])}, state)  # b missing
    with pytest.raises(ValueError):
        adam_step([a, b], {a: np.array([1.0]), b: np.array([np.nan])}, state)
    with pytest.raises(ValueError):
        adam_step([a, b], {a: np.ones(3), b: np.array([1.0])}, state)  # bad shape
    # validation happens for the whole batch before the first write
    assert a.data[0] == 1.0 and b.data[0] == 2.0
    assert state.step == 0 and not state.moments
