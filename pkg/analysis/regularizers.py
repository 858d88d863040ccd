"""
Geometry penalties with exact gradients, and their schedules.

Sign convention (easy to invert by mistake): the training loss SUBTRACTS both
measures,

    loss = CE - lambda * NCC      ->  maximizes NCC, i.e. suppresses collapse
    loss = CE - lambda * kappa    ->  maximizes kappa, i.e. suppresses flatness

The functions below return the measure and its gradient (d measure / d input);
the caller injects ``-lambda * grad`` into backpropagation.
"""
from typing import NamedTuple, Optional

import numpy as np
from numpy.typing import ArrayLike

from analysis.geometry import check_distinct_means, pairwise_sq_dists, class_stats, softmax_hessian_blocks
from models.configs import RegConfig
from models.enums import NccMode, RegKind, ScheduleKind
from utils.errors import ShapeError
from utils.numkit import Matrix, Vector, row_sq_norms


class NccRegResult(NamedTuple):
    value: float
    grad_phi: Matrix


class FlatnessRegResult(NamedTuple):
    value: float
    grad_w: Matrix
    grad_phi: Matrix
    grad_b: Vector


def ncc_reg(
    phi: ArrayLike,
    labels: ArrayLike,
    mode: NccMode = NccMode.MEAN_VARIANCE,
    num_classes: Optional[int] = None,
    stop_gradient: bool = False,
) -> NccRegResult:
    """
    NCC and its exact gradient w.r.t. every feature vector. ``stop_gradient`` holds the
    class means and their distances fixed: only the within-class variances are
    differentiated, which is the gradient of ``ncc_fixed_distances``.
    """
    phi = np.asarray(phi, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    stats = class_stats(phi, labels, num_classes)
    mode = NccMode(mode)
    k = stats.num_classes
    means = stats.means
    V = stats.variances(mode)

    dists = pairwise_sq_dists(means)
    check_distinct_means(dists)
    off = ~np.eye(k, dtype=bool)
    inv_d = np.where(off, 1.0 / np.where(off, dists, 1.0), 0.0)

    value = float(((V[:, None] + V[None, :]) * 0.5 * inv_d)[off].sum())

    # d NCC / d V_c = sum_{c' != c} 1 / D_cc'
    dV = inv_d.sum(axis=1)
    # d NCC / d mu_c = -2 sum_{c' != c} (V_c + V_c') (mu_c - mu_c') / D_cc'^2
    coef = (V[:, None] + V[None, :]) * inv_d * inv_d
    dmu = -2.0 * (coef.sum(axis=1)[:, None] * means - coef @ means)

    # V_c' dependence on phi_x: 2 (phi_x - mu_c), divided by |D_c| in mean mode
    dev = phi - means[labels]
    scale = dV[labels]
    if mode == NccMode.MEAN_VARIANCE:
        scale = scale / stats.counts[labels]
    grad_phi = 2.0 * scale[:, None] * dev
    if not stop_gradient:
        grad_phi += dmu[labels] / stats.counts[labels][:, None]
    return NccRegResult(value, grad_phi)


def ncc_fixed_distances(
    phi: ArrayLike,
    labels: ArrayLike,
    dists: Matrix,
    mode: NccMode = NccMode.MEAN_VARIANCE,
    num_classes: Optional[int] = None,
) -> float:
    """NCC of ``phi`` with the squared mean distances replaced by ``dists``."""
    stats = class_stats(phi, labels, num_classes)
    V = stats.variances(mode)
    k = stats.num_classes
    if dists.shape != (k, k):
        raise ShapeError("ncc_fixed_distances", dists.shape, (k, k))
    off = ~np.eye(k, dtype=bool)
    return float(((V[:, None] + V[None, :]) / (2.0 * np.where(off, dists, 1.0)))[off].sum())


def flatness_reg(w: Matrix, phi: Matrix, probs: Matrix, stop_gradient: bool = False) -> FlatnessRegResult:
    """
    kappa = (1/n) sum_x ||phi_x||^2 sum_{s,s'} G_ss' A_x[s,s'], G = w w^T,
    A_x = diag(p_x) - p_x p_x^T, with total derivatives w.r.t. w, phi and b
    (the latter two also through the softmax). ``stop_gradient`` keeps only the
    direct dependencies.
    """
    w = np.asarray(w, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    probs = np.asarray(probs, dtype=np.float64)
    n, d = phi.shape
    k = w.shape[0]
    if w.shape != (k, d) or probs.shape != (n, k):
        raise ShapeError("flatness_reg", w.shape, phi.shape, probs.shape)

    G = w @ w.T
    A = softmax_hessian_blocks(probs)
    a = row_sq_norms(phi)
    c = np.einsum("ij,xij->x", G, A)
    T = np.einsum("x,xij->ij", a, A) / n
    value = float(np.sum(G * T))

    grad_w = 2.0 * T @ w
    grad_phi = (2.0 / n) * c[:, None] * phi
    grad_b = np.zeros(k)

    if not stop_gradient:
        # dc/dp = diag(G) - 2 G p, pulled back through the softmax Jacobian
        v = np.diag(G)[None, :] - 2.0 * probs @ G
        dz = probs * (v - np.sum(probs * v, axis=1, keepdims=True))
        dz *= a[:, None] / n
        grad_w = grad_w + dz.T @ phi
        grad_phi = grad_phi + dz @ w
        grad_b = dz.sum(axis=0)

    return FlatnessRegResult(value, grad_w, grad_phi, grad_b)


def apply_schedule(cfg: RegConfig, epoch: int) -> float:
    """Effective coefficient at ``epoch``; unplug_at(E) is off from epoch E on."""
    if RegKind(cfg.kind) == RegKind.NONE:
        return 0.0
    if ScheduleKind(cfg.schedule) == ScheduleKind.UNPLUG_AT and epoch >= cfg.unplug_epoch:
        return 0.0
    return float(cfg.lambda_reg)
