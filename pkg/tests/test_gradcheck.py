import numpy as np
import pytest

from metaqa import tensor as T
from metaqa.errors import DeterminismError
from metaqa.experiments import ToyCheckConfig, toy_gradcheck, toy_problem
from metaqa.gradcheck import grad_check, relative_error
from metaqa.tensor import Tensor


def test_relative_error_definition():
    assert relative_error(6.0, 6.0) == 0.0
    assert relative_error(1.0, 0.5) == pytest.approx(0.5)
    assert relative_error(0.0, 1e-12) == pytest.approx(1e-4)  # floor of 1e-8


def test_square_at_three():
    w = Tensor([3.0], requires_grad=True)
    rep = grad_check(lambda: T.sum_(w * w), [w], h=1e-4)
    (entry,) = rep.entries
    assert entry.numeric == pytest.approx(6.0)
    assert entry.rel_error < 1e-8
    assert rep.passed


def test_constant_function_passes():
    w = Tensor(np.ones(3), requires_grad=True)
    rep = grad_check(lambda: T.sum_(Tensor(np.ones(2))) + T.scale(T.sum_(w), 0.0), [w])
    assert rep.passed and rep.max_rel_error == 0.0


def test_parameters_restored_after_check(rng):
    w = Tensor(rng.normal(size=(3, 3)), requires_grad=True)
    before = w.data.copy()
    grad_check(lambda: T.sum_(T.gelu(w)), [w])
    assert np.array_equal(w.data, before)


def test_nondeterministic_forward_detected():
    w = Tensor([1.0], requires_grad=True)
    noise = np.random.default_rng(0)
    with pytest.raises(DeterminismError):
        grad_check(lambda: T.sum_(w * Tensor(noise.normal(size=1))), [w])


def test_corrupted_gradient_is_caught():
    w = Tensor([0.5, -1.5], requires_grad=True)
    rep = grad_check(lambda: T.sum_(T.gelu(w)), {"w": w}, grad_hook=lambda n, g: g * 1.01)
    assert not rep.passed
    assert rep.max_rel_error == pytest.approx(0.01 / 1.01, rel=1e-4)


def test_sample_limits_checked_coordinates(rng):
    w = Tensor(rng.normal(size=(10, 10)), requires_grad=True)
    rep = grad_check(lambda: T.sum_(T.gelu(w)), [w], sample=17)
    assert rep.count == 17


def test_toy_model_joint_loss():
    rep = toy_gradcheck(ToyCheckConfig.from_dict({"sample": 120, "seed": 3}))
    assert rep.count == 120
    assert rep.passed, rep.worst(3)


def test_every_encoder_parameter_receives_gradient():
    model, loss_fn = toy_problem(ToyCheckConfig.from_dict({"seed": 1}))
    for p in model.params.values():
        p.grad = None
    T.backward(loss_fn(), model.params.values())
    dead = [n for n, p in model.params.items() if not np.any(np.abs(p.grad) > 1e-12)]
    assert dead == []
