"""AdamW closed-form oracle, schedule shape, and gradient hygiene."""

import numpy as np
import pytest

from ticketlab.errors import ConfigError, NumericError
from ticketlab.numerics import Tensor
from ticketlab.training import OptimizerState, TrainConfig, adamw_step, lr_at

from .conftest import rand_array


def manual_adamw(theta, grads, lr, cfg, steps):
    """Scalar-loop reference: decoupled decay from pre-update weights."""
    theta = theta.copy()
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    for t in range(1, steps + 1):
        g = grads[t - 1]
        m = cfg.beta1 * m + (1 - cfg.beta1) * g
        v = cfg.beta2 * v + (1 - cfg.beta2) * g * g
        mhat = m / (1 - cfg.beta1 ** t)
        vhat = v / (1 - cfg.beta2 ** t)
        theta = theta - lr * mhat / (np.sqrt(vhat) + cfg.eps) - lr * cfg.weight_decay * theta
    return theta


class TestAdamwStep:
    def test_matches_closed_form_over_several_steps(self, f64):
        cfg = TrainConfig(total_steps=10, learning_rate=0.01, weight_decay=0.04)
        theta0 = rand_array((4, 3), 1)
        grads = [rand_array((4, 3), 10 + t) for t in range(5)]
        tensors = {"w": Tensor(theta0.copy(), requires_grad=True)}
        state = OptimizerState.zeros(tensors)
        for g in grads:
            adamw_step(tensors, {"w": g}, state, 0.01, cfg)
        want = manual_adamw(theta0, grads, 0.01, cfg, 5)
        assert np.allclose(tensors["w"].data, want, atol=1e-12, rtol=0)
        assert state.step == 5

    def test_zero_gradient_shrinks_by_decay_only(self, f64):
        cfg = TrainConfig(total_steps=10, learning_rate=0.1, weight_decay=0.5)
        theta0 = rand_array((6,), 2)
        tensors = {"w": Tensor(theta0.copy(), requires_grad=True)}
        state = OptimizerState.zeros(tensors)
        adamw_step(tensors, {"w": np.zeros(6)}, state, 0.1, cfg)
        assert np.allclose(tensors["w"].data, theta0 * (1 - 0.1 * 0.5), atol=1e-15, rtol=0)

    def test_missing_gradient_treated_as_zero(self, f64):
        cfg = TrainConfig(total_steps=10, learning_rate=0.1, weight_decay=0.2)
        theta0 = rand_array((3,), 3)
        tensors = {"w": Tensor(theta0.copy(), requires_grad=True)}
        state = OptimizerState.zeros(tensors)
        adamw_step(tensors, {}, state, 0.1, cfg)
        assert np.allclose(tensors["w"].data, theta0 * (1 - 0.1 * 0.2), atol=1e-15, rtol=0)

    def test_decay_decoupled_from_adaptive_term(self, f64):
        # with wd=0 the first step moves every coordinate by ~lr * sign(g)
        cfg = TrainConfig(total_steps=10, learning_rate=0.05, weight_decay=0.0)
        theta0 = np.array([1.0, -2.0, 3.0])
        g = np.array([0.3, -0.7, 0.0001])
        tensors = {"w": Tensor(theta0.copy(), requires_grad=True)}
        adamw_step(tensors, {"w": g}, OptimizerState.zeros(tensors), 0.05, cfg)
        moved = theta0 - tensors["w"].data
        assert np.allclose(moved, 0.05 * np.sign(g), atol=1e-5)

    def test_non_finite_gradient_rejected(self, f64):
        cfg = TrainConfig(total_steps=10)
        tensors = {"w": Tensor(np.ones(3), requires_grad=True)}
        state = OptimizerState.zeros(tensors)
        bad = np.array([0.1, np.nan, 0.2])
        with pytest.raises(NumericError):
            adamw_step(tensors, {"w": bad}, state, 0.01, cfg)
        with pytest.raises(NumericError):
            adamw_step(tensors, {"w": np.array([np.inf, 0, 0])}, state, 0.01, cfg)

    def test_masked_coordinates_stay_zero_only_without_decay_term(self, f64):
        # adamw itself does not know about masks: a zeroed weight with zero
        # grad stays zero because decay is multiplicative
        cfg = TrainConfig(total_steps=10, learning_rate=0.1, weight_decay=0.3)
        tensors = {"w": Tensor(np.array([0.0, 1.0]), requires_grad=True)}
        adamw_step(tensors, {"w": np.zeros(2)}, OptimizerState.zeros(tensors), 0.1, cfg)
        assert tensors["w"].data[0] == 0.0


class TestSchedule:
    def test_linear_decay_endpoints(self):
        cfg = TrainConfig(total_steps=200, learning_rate=1e-3)
        assert lr_at(cfg, 0) == 1e-3
        assert lr_at(cfg, 100) == pytest.approx(5e-4, abs=0)
        assert lr_at(cfg, 200) == 0.0

    def test_linearity(self):
        cfg = TrainConfig(total_steps=400, learning_rate=2e-3)
        pts = [lr_at(cfg, s) for s in range(0, 401, 50)]
        diffs = np.diff(pts)
        assert np.allclose(diffs, diffs[0], atol=1e-18)

    def test_step_bounds(self):
        cfg = TrainConfig(total_steps=10)
        with pytest.raises(ValueError):
            lr_at(cfg, -1)
        with pytest.raises(ValueError):
            lr_at(cfg, 11)

    def test_zero_step_run(self):
        assert lr_at(TrainConfig(total_steps=0), 0) == 0.0


class TestTrainConfigValidation:
    def test_rejects_bad_values(self):
        with pytest.raises(ConfigError):
            TrainConfig(total_steps=-1)
        with pytest.raises(ConfigError):
            TrainConfig(total_steps=10, learning_rate=0.0)
        with pytest.raises(ConfigError):
            TrainConfig(total_steps=10, batch_size=0)
        with pytest.raises(ConfigError):
            TrainConfig(total_steps=10, beta1=1.0)
        with pytest.raises(ConfigError):
            TrainConfig(total_steps=10, weight_decay=-0.01)
        with pytest.raises(ConfigError):
            TrainConfig(total_steps=10, eps=0.0)

    def test_roundtrip_and_replace(self):
        cfg = TrainConfig(total_steps=50, seed=9)
        assert TrainConfig.from_dict(cfg.to_dict()) == cfg
        assert cfg.replace(total_steps=60).total_steps == 60
        assert cfg.replace(total_steps=60).seed == 9
