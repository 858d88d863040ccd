import numpy as np
import pytest

from models.configs import MlpConfig, OptimizerConfig
from network.mlp import Gradients, accuracy, backward, ce_loss, forward, init_mlp
from network.optimizer import OptimState, Optimizer, SgdState, adamw_step, sgd_step


@pytest.fixture
def params():
    return init_mlp(MlpConfig(layer_widths=[3, 4, 2], seed=0))


def _grads_like(params, value):
    return Gradients([np.full_like(W, value) for W in params.weights], [np.full_like(b, value) for b in params.biases])


def test_adamw_first_step_closed_form(params):
    cfg = OptimizerConfig(lr=0.1, weight_decay=0.5)
    state = OptimState.for_params(params, cfg)
    before = [a.copy() for a in params.arrays()]
    grads = Gradients(
        [np.random.default_rng(1).normal(size=W.shape) for W in params.weights],
        [np.random.default_rng(2).normal(size=b.shape) for b in params.biases],
    )
    adamw_step(params, grads, state)
    for old, new, g in zip(before, params.arrays(), grads.arrays()):
        # bias-corrected moments after one step are g and g^2
        expected = old - 0.1 * (g / (np.abs(g) + cfg.eps) + 0.5 * old)
        np.testing.assert_allclose(new, expected, rtol=1e-12, atol=1e-15)
    assert state.t == 1


def test_adamw_weight_decay_is_decoupled(params):
    cfg = OptimizerConfig(lr=0.1, weight_decay=1.0)
    state = OptimState.for_params(params, cfg)
    before = params.weights[0].copy()
    adamw_step(params, _grads_like(params, 0.0), state)
    np.testing.assert_allclose(params.weights[0], before * 0.9)


def test_optimizer_step_bumps_version(params):
    opt = Optimizer(params, OptimizerConfig())
    opt.step(params, _grads_like(params, 1.0))
    opt.step(params, _grads_like(params, 1.0))
    assert params.version == 2


def test_sgd_momentum_accumulates(params):
    cfg = OptimizerConfig(name="sgd", lr=0.1, momentum=0.5, weight_decay=0.0)
    state = SgdState.for_params(params, cfg)
    start = params.biases[0].copy()
    sgd_step(params, _grads_like(params, 1.0), state)
    np.testing.assert_allclose(params.biases[0], start - 0.1)
    sgd_step(params, _grads_like(params, 1.0), state)
    np.testing.assert_allclose(params.biases[0], start - 0.1 - 0.1 * 1.5)


def test_sgd_couples_weight_decay_into_gradient(params):
    cfg = OptimizerConfig(name="sgd", lr=0.1, momentum=0.0, weight_decay=0.2)
    state = SgdState.for_params(params, cfg)
    before = params.weights[1].copy()
    sgd_step(params, _grads_like(params, 0.0), state)
    np.testing.assert_allclose(params.weights[1], before - 0.1 * 0.2 * before)


def test_optimizer_dispatch(params):
    assert isinstance(Optimizer(params, OptimizerConfig(name="adamw")).state, OptimState)
    assert isinstance(Optimizer(params, OptimizerConfig(name="sgd")).state, SgdState)


def test_adamw_fits_four_point_toy_set():
    x = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]])
    labels = np.array([0, 0, 1, 1])
    net = init_mlp(MlpConfig(layer_widths=[2, 16, 2], seed=0))
    opt = Optimizer(net, OptimizerConfig(lr=1e-2, weight_decay=0.0))
    for _ in range(2000):
        cache = forward(net, x)
        opt.step(net, backward(net, cache, labels))
    final = forward(net, x)
    assert ce_loss(final, labels) < 1e-3
    assert accuracy(final, labels) == 1.0
