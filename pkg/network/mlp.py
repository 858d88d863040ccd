"""
ReLU multilayer perceptron with an exposed penultimate feature map phi,
softmax cross-entropy and hand-written backpropagation.

Shapes follow the row-per-sample convention: x is (n, in), phi is (n, d),
a layer weight is (out, in) and the final layer weight w is (k, d).
"""
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from numpy.typing import ArrayLike

from models.configs import MlpConfig
from utils.errors import ShapeError, StaleCacheError
from utils.numkit import Matrix, RngState, Vector, log_softmax_rows, rng_normal, softmax_rows


@dataclass
class MlpParams:
    weights: List[Matrix]
    biases: List[Vector]
    version: int = 0  # bumped by every in-place update; forward caches record it

    @property
    def w(self) -> Matrix:
        """Final-layer weight (k, d)."""
        return self.weights[-1]

    @property
    def b(self) -> Vector:
        return self.biases[-1]

    @property
    def widths(self) -> List[int]:
        return [self.weights[0].shape[1]] + [W.shape[0] for W in self.weights]

    def arrays(self) -> List[np.ndarray]:
        """Parameters in a fixed order: W0, b0, W1, b1, ..."""
        out = []
        for W, b in zip(self.weights, self.biases):
            out.extend([W, b])
        return out

    def copy(self) -> "MlpParams":
        return MlpParams([W.copy() for W in self.weights], [b.copy() for b in self.biases], self.version)

    def flatten(self) -> Vector:
        return np.concatenate([a.ravel() for a in self.arrays()])

    def unflatten(self, theta: Vector) -> "MlpParams":
        """New params with the same shapes filled from a flat vector."""
        theta = np.asarray(theta, dtype=np.float64)
        weights, biases, offset = [], [], 0
        for W, b in zip(self.weights, self.biases):
            weights.append(theta[offset:offset + W.size].reshape(W.shape))
            offset += W.size
            biases.append(theta[offset:offset + b.size].reshape(b.shape))
            offset += b.size
        if offset != theta.size:
            raise ShapeError("unflatten", (theta.size,), (offset,))
        return MlpParams(weights, biases)


@dataclass
class Gradients:
    weights: List[Matrix]
    biases: List[Vector]

    def arrays(self) -> List[np.ndarray]:
        out = []
        for W, b in zip(self.weights, self.biases):
            out.extend([W, b])
        return out

    def flatten(self) -> Vector:
        return np.concatenate([a.ravel() for a in self.arrays()])


@dataclass
class ForwardCache:
    inputs: Matrix
    pre_activations: List[Matrix]
    activations: List[Matrix]  # activations[0] is the input
    logits: Matrix
    log_probs: Matrix
    probs: Matrix
    version: int = 0
    extras: dict = field(default_factory=dict)

    @property
    def phi(self) -> Matrix:
        """Penultimate-layer features (last hidden activation)."""
        return self.activations[-1]


def init_mlp(cfg: MlpConfig) -> MlpParams:
    """Weights ~ N(0, (init_scale / sqrt(fan_in))^2) from the seeded stream; zero biases."""
    widths = list(cfg.layer_widths)
    if len(widths) < 3 or any(w < 1 for w in widths):
        raise ValueError(f"invalid layer widths {widths}")

    rng = RngState(cfg.seed, stream=1)
    weights, biases = [], []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        std = cfg.init_scale / np.sqrt(fan_in)
        weights.append(rng_normal(rng, fan_out * fan_in, 0.0, std).reshape(fan_out, fan_in))
        biases.append(np.zeros(fan_out))
    return MlpParams(weights, biases)


def forward(params: MlpParams, x: ArrayLike) -> ForwardCache:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.weights[0].shape[1]:
        raise ShapeError("forward", x.shape, params.weights[0].shape)

    pre, acts = [], [x]
    h = x
    for W, b in zip(params.weights[:-1], params.biases[:-1]):
        z = h @ W.T + b
        h = np.maximum(z, 0.0)
        pre.append(z)
        acts.append(h)

    logits = h @ params.w.T + params.b
    return ForwardCache(
        inputs=x,
        pre_activations=pre,
        activations=acts,
        logits=logits,
        log_probs=log_softmax_rows(logits),
        probs=softmax_rows(logits),
        version=params.version,
    )


def _check_labels(labels: ArrayLike, n: int, k: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (n,):
        raise ShapeError("labels", labels.shape, (n,))
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise ValueError(f"labels must lie in [0, {k})")
    return labels


def ce_loss(cache: ForwardCache, labels: ArrayLike) -> float:
    """Mean negative log-probability of the true class."""
    n, k = cache.probs.shape
    labels = _check_labels(labels, n, k)
    return float(-cache.log_probs[np.arange(n), labels].mean())


def accuracy(cache: ForwardCache, labels: ArrayLike) -> float:
    labels = np.asarray(labels)
    return float((cache.logits.argmax(axis=1) == labels).mean())


def backward(
    params: MlpParams,
    cache: ForwardCache,
    labels: ArrayLike,
    extra_feature_grad: Optional[Matrix] = None,
    extra_weight_grad: Optional[Matrix] = None,
    extra_bias_grad: Optional[Vector] = None,
) -> Gradients:
    """
    Gradients of mean CE plus injected terms. ``extra_feature_grad`` (n, d) is a
    gradient w.r.t. phi and flows into all earlier layers; ``extra_weight_grad``
    (k, d) and ``extra_bias_grad`` (k,) are added to the final layer.
    """
    if cache.version != params.version:
        raise StaleCacheError(
            f"cache from parameter version {cache.version}, parameters are at {params.version}"
        )
    n, k = cache.probs.shape
    labels = _check_labels(labels, n, k)
    phi = cache.phi

    dz = cache.probs.copy()
    dz[np.arange(n), labels] -= 1.0
    dz /= n

    grad_w = dz.T @ phi
    grad_b = dz.sum(axis=0)
    if extra_weight_grad is not None:
        if np.shape(extra_weight_grad) != grad_w.shape:
            raise ShapeError("backward extra_weight_grad", np.shape(extra_weight_grad), grad_w.shape)
        grad_w = grad_w + extra_weight_grad
    if extra_bias_grad is not None:
        if np.shape(extra_bias_grad) != grad_b.shape:
            raise ShapeError("backward extra_bias_grad", np.shape(extra_bias_grad), grad_b.shape)
        grad_b = grad_b + extra_bias_grad

    dh = dz @ params.w
    if extra_feature_grad is not None:
        if np.shape(extra_feature_grad) != phi.shape:
            raise ShapeError("backward extra_feature_grad", np.shape(extra_feature_grad), phi.shape)
        dh = dh + extra_feature_grad

    grads_w, grads_b = [grad_w], [grad_b]
    for layer in range(len(params.weights) - 2, -1, -1):
        dz_l = dh * (cache.pre_activations[layer] > 0)
        grads_w.append(dz_l.T @ cache.activations[layer])
        grads_b.append(dz_l.sum(axis=0))
        if layer > 0:
            dh = dz_l @ params.weights[layer]

    grads_w.reverse()
    grads_b.reverse()
    return Gradients(grads_w, grads_b)


def classifier_loss(w: Matrix, b: Vector, phi: Matrix, labels: ArrayLike) -> float:
    """Mean CE of the last layer alone, as a function of its weight w."""
    log_probs = log_softmax_rows(phi @ w.T + b)
    labels = np.asarray(labels, dtype=np.int64)
    return float(-log_probs[np.arange(len(labels)), labels].mean())


def classifier_loss_grad(w: Matrix, b: Vector, phi: Matrix, labels: ArrayLike) -> Matrix:
    """d classifier_loss / d w = (P - Y)^T phi / n."""
    probs = softmax_rows(phi @ w.T + b)
    labels = np.asarray(labels, dtype=np.int64)
    n = len(labels)
    probs[np.arange(n), labels] -= 1.0
    return probs.T @ phi / n
