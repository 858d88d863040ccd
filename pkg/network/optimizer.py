"""
AdamW (decoupled weight decay) and momentum SGD, updating MlpParams in place.
"""
from dataclasses import dataclass, field
from typing import List

import numpy as np

from models.configs import OptimizerConfig
from models.enums import OptimizerName
from network.mlp import Gradients, MlpParams


@dataclass
class OptimState:
    lr: float
    beta1: float
    beta2: float
    eps: float
    weight_decay: float
    m: List[np.ndarray] = field(default_factory=list)
    v: List[np.ndarray] = field(default_factory=list)
    t: int = 0

    @classmethod
    def for_params(cls, params: MlpParams, cfg: OptimizerConfig) -> "OptimState":
        return cls(
            lr=cfg.lr,
            beta1=cfg.beta1,
            beta2=cfg.beta2,
            eps=cfg.eps,
            weight_decay=cfg.weight_decay,
            m=[np.zeros_like(a) for a in params.arrays()],
            v=[np.zeros_like(a) for a in params.arrays()],
        )


def adamw_step(params: MlpParams, grads: Gradients, opt: OptimState) -> MlpParams:
    """theta <- theta - lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * theta)."""
    opt.t += 1
    bc1 = 1.0 - opt.beta1 ** opt.t
    bc2 = 1.0 - opt.beta2 ** opt.t
    for theta, g, m, v in zip(params.arrays(), grads.arrays(), opt.m, opt.v):
        m *= opt.beta1
        m += (1.0 - opt.beta1) * g
        v *= opt.beta2
        v += (1.0 - opt.beta2) * g * g
        m_hat = m / bc1
        v_hat = v / bc2
        theta -= opt.lr * (m_hat / (np.sqrt(v_hat) + opt.eps) + opt.weight_decay * theta)
    params.version += 1
    return params


@dataclass
class SgdState:
    lr: float
    momentum: float
    weight_decay: float
    buffers: List[np.ndarray] = field(default_factory=list)
    t: int = 0

    @classmethod
    def for_params(cls, params: MlpParams, cfg: OptimizerConfig) -> "SgdState":
        return cls(
            lr=cfg.lr,
            momentum=cfg.momentum,
            weight_decay=cfg.weight_decay,
            buffers=[np.zeros_like(a) for a in params.arrays()],
        )


def sgd_step(params: MlpParams, grads: Gradients, opt: SgdState) -> MlpParams:
    """Heavy-ball SGD with weight decay folded into the gradient."""
    opt.t += 1
    for theta, g, buf in zip(params.arrays(), grads.arrays(), opt.buffers):
        d = g + opt.weight_decay * theta
        buf *= opt.momentum
        buf += d
        theta -= opt.lr * buf
    params.version += 1
    return params


class Optimizer:
    """Dispatches to the configured update rule."""

    def __init__(self, params: MlpParams, cfg: OptimizerConfig):
        self.name = OptimizerName(cfg.name)
        if self.name == OptimizerName.ADAMW:
            self.state = OptimState.for_params(params, cfg)
        else:
            self.state = SgdState.for_params(params, cfg)

    def step(self, params: MlpParams, grads: Gradients) -> MlpParams:
        if self.name == OptimizerName.ADAMW:
            return adamw_step(params, grads, self.state)
        return sgd_step(params, grads, self.state)
