import math

import numpy as np
import pytest

from mbpetc.dynamics import (
    PENDULUM_X0,
    LevelSetSpec,
    get_model,
    lie_derivative,
    pendulum_model,
)
from mbpetc.errors import MbpetcError


@pytest.fixture(scope="module")
def model():
    return pendulum_model(gamma_rate=1.0)


def test_lyapunov_value_hand_computed(model):
    # 1.278*0.01 + 0.632*0.01 + 0.404*0.01
    assert model.v(np.array([0.1, 0.1])) == pytest.approx(0.02314, abs=1e-15)


def test_feedback_hand_computed(model):
    u = model.kappa(np.array([0.1, 0.2]))
    assert u.shape == (1,)
    assert u[0] == pytest.approx(11.396769794906568, rel=1e-14)


def test_field_formula(model):
    x = np.array([0.5, 0.2])
    fx = model.f(x, np.array([1.0]))
    assert fx[0] == 0.2
    assert fx[1] == pytest.approx((math.sin(0.5) - math.cos(0.5)) * 0.1, rel=1e-14)


def test_closed_loop_is_linear(model):
    # the feedback exactly cancels the nonlinearity
    a_cl = np.array([[0.0, 1.0], [-3.16, -4.04]])
    rng = np.random.default_rng(1)
    xs = rng.uniform(-1.0, 1.0, (200, 2))
    assert np.allclose(model.closed_loop(xs), xs @ a_cl.T, atol=1e-12)


def test_gradient_matches_finite_differences(model):
    rng = np.random.default_rng(2)
    xs = rng.uniform(-0.5, 0.5, (1000, 2))
    eps = 1e-6
    for j in range(2):
        step = np.zeros(2)
        step[j] = eps
        fd = (model.v(xs + step) - model.v(xs - step)) / (2 * eps)
        assert np.max(np.abs(fd - model.v_grad(xs)[:, j])) <= 1e-6


def test_batch_matches_scalar_paths(model):
    rng = np.random.default_rng(3)
    xs = rng.uniform(-0.6, 0.6, (50, 2))
    us = model.kappa(xs)
    for i in range(len(xs)):
        assert np.allclose(model.f(xs[i], us[i]), model.f(xs, us)[i], rtol=1e-15)
        assert np.allclose(model.kappa(xs[i]), us[i], rtol=1e-15)
        assert model.v(xs[i]) == pytest.approx(model.v(xs)[i], rel=1e-15)
        assert np.allclose(model.v_grad(xs[i]), model.v_grad(xs)[i], rtol=1e-15)


def test_feedback_singular_outside_halfpi(model):
    with pytest.raises(MbpetcError):
        model.kappa(np.array([math.pi / 2, 0.0]))
    with pytest.raises(MbpetcError):
        model.kappa(np.array([[0.0, 0.0], [2.0, 0.0]]))


def test_lie_derivative_negative_under_feedback(model):
    rng = np.random.default_rng(4)
    xs = rng.uniform(-0.4, 0.4, (300, 2))
    xs = xs[np.abs(xs).sum(axis=1) > 1e-3]
    lie = lie_derivative(model, xs, model.kappa(xs))
    assert np.all(lie < 0)


def test_lie_derivative_dimension_checks(model):
    with pytest.raises(ValueError):
        lie_derivative(model, np.zeros(3), np.zeros(1))
    with pytest.raises(ValueError):
        lie_derivative(model, np.zeros(2), np.zeros(2))


def test_benchmark_initial_state_inside_level_set(model):
    assert float(model.v(PENDULUM_X0)) == pytest.approx(0.2474, abs=5e-4)
    assert float(model.v(PENDULUM_X0)) < 0.258


def test_with_gamma_rate():
    m = pendulum_model(gamma_rate=1.0).with_gamma_rate(0.5)
    assert m.gamma_rate == 0.5
    assert m.gamma(2.0) == 1.0


def test_levelset_spec_validation():
    spec = LevelSetSpec(0.258)
    assert spec.margin == pytest.approx(2.58e-7)
    with pytest.raises(ValueError):
        LevelSetSpec(-1.0)
    with pytest.raises(ValueError):
        LevelSetSpec(1.0, margin=2.0)


def test_registry():
    assert get_model("pendulum", gamma_rate=1.0).name == "pendulum"
    with pytest.raises(KeyError):
        get_model("does-not-exist")
