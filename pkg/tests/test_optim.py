"""Optimizer behavior: descent direction, explicit grad lifecycle, and a
scalar-simulation oracle for the adaptive-moment rule."""

import numpy as np
import pytest

from chatgan.optim import Adam, MissingGradientError, RMSProp, zero_grads
from chatgan.tensor import Tensor


def test_rmsprop_descends_scalar():
    w = Tensor(np.array([1.0]), requires_grad=True)
    w.grad = np.array([1.0], dtype=w.data.dtype)
    RMSProp(lr=0.1).step({"w": w})
    assert w.data[0] < 1.0


def test_zero_grad_then_step_errors_with_name():
    w = Tensor(np.array([1.0]), requires_grad=True)
    zero_grads({"w": w})
    with pytest.raises(MissingGradientError, match="w"):
        Adam(lr=0.1).step({"w": w})


def test_zero_gradient_leaves_parameter_unchanged():
    w = Tensor(np.array([2.5]), requires_grad=True)
    w.grad = np.zeros(1, dtype=w.data.dtype)
    Adam(lr=0.1).step({"w": w})
    assert w.data[0] == pytest.approx(2.5)


def _adam_scalar_oracle(steps: int, lr: float, start: float) -> float:
    # independent scalar simulation of f(w) = (w - 3)^2
    w, m, v = start, 0.0, 0.0
    b1, b2, eps = 0.9, 0.999, 1e-8
    for t in range(1, steps + 1):
        g = 2 * (w - 3.0)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        w -= lr * (m / (1 - b1 ** t)) / (np.sqrt(v / (1 - b2 ** t)) + eps)
    return w


def test_adam_converges_on_quadratic_and_matches_oracle():
    w = Tensor(np.array([0.0]), requires_grad=True)
    opt = Adam(lr=0.1)
    for _ in range(100):
        w.grad = np.array([2 * (w.data[0] - 3.0)], dtype=w.data.dtype)
        opt.step({"w": w})
    oracle = _adam_scalar_oracle(100, 0.1, 0.0)
    assert abs(w.data[0] - 3.0) < 0.5
    assert w.data[0] == pytest.approx(oracle, abs=1e-4)


def test_optimizer_kinds_and_default_lr():
    assert Adam().kind == "adaptive-moment"
    assert RMSProp().kind == "rms-propagation"
    assert Adam().lr == pytest.approx(5e-5)
    assert RMSProp().lr == pytest.approx(5e-5)


def test_accumulator_shapes_match_parameters():
    w = Tensor(np.ones((2, 3)), requires_grad=True)
    w.grad = np.ones((2, 3), dtype=w.data.dtype)
    opt = RMSProp(lr=0.01)
    opt.step({"w": w})
    assert opt._sq["w"].shape == (2, 3)


def test_invalid_learning_rate_rejected():
    with pytest.raises(ValueError):
        Adam(lr=0.0)
    with pytest.raises(ValueError):
        RMSProp(lr=-1.0)
