"""
Penultimate-layer geometry: class statistics, neural collapse clustering (NCC),
cluster angles, closed-form relative flatness and KDE representativeness.
"""
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from numpy.typing import ArrayLike
from sklearn.neighbors import KernelDensity

from models.configs import KdeConfig
from models.enums import KdeScale, NccMode
from models.records import GeometryReport
from utils.errors import CollapsedMeansError, EmptyClassError, ShapeError
from utils.logger import log
from utils.numkit import Matrix, Vector, complement_sums, row_sq_norms


@dataclass
class ClassStats:
    means: Matrix          # (k, d)
    var_sum: Vector        # sum over the class of ||phi - mu_c||^2
    counts: np.ndarray     # (k,)
    global_mean: Vector    # count-weighted mean of the class means
    radii: Vector          # ||mu_c - mu_g||

    @property
    def num_classes(self) -> int:
        return self.means.shape[0]

    @property
    def var_mean(self) -> Vector:
        return self.var_sum / self.counts

    def variances(self, mode: NccMode) -> Vector:
        return self.var_sum if NccMode(mode) == NccMode.SUM_VARIANCE else self.var_mean


def class_stats(phi: ArrayLike, labels: ArrayLike, num_classes: Optional[int] = None) -> ClassStats:
    """Per-class means and variances; every class in [0, num_classes) must occur."""
    phi = np.asarray(phi, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if phi.ndim != 2 or labels.shape != (phi.shape[0],):
        raise ShapeError("class_stats", phi.shape, labels.shape)
    k = int(labels.max()) + 1 if num_classes is None else num_classes

    counts = np.bincount(labels, minlength=k)
    if len(counts) > k:
        raise ValueError(f"label {int(labels.max())} outside [0, {k})")
    empty = np.flatnonzero(counts == 0)
    if empty.size:
        raise EmptyClassError(int(empty[0]))

    sums = np.zeros((k, phi.shape[1]))
    np.add.at(sums, labels, phi)
    means = sums / counts[:, None]
    dev = phi - means[labels]
    var_sum = np.bincount(labels, weights=row_sq_norms(dev), minlength=k)
    global_mean = (counts[:, None] * means).sum(axis=0) / counts.sum()
    radii = np.linalg.norm(means - global_mean, axis=1)
    return ClassStats(means, var_sum, counts, global_mean, radii)


def pairwise_sq_dists(means: Matrix) -> Matrix:
    diff = means[:, None, :] - means[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def check_distinct_means(dists: Matrix):
    k = dists.shape[0]
    off = dists + np.eye(k)
    hit = np.argwhere(off <= 0.0)
    if hit.size:
        i, j = sorted(hit[0])
        raise CollapsedMeansError(int(i), int(j))


def ncc(stats: ClassStats, mode: NccMode = NccMode.MEAN_VARIANCE) -> float:
    """
    NCC = sum over ordered pairs c != c' of (V_c + V_c') / (2 ||mu_c - mu_c'||^2).
    Low values mean tight, well separated clusters.
    """
    V = stats.variances(mode)
    dists = pairwise_sq_dists(stats.means)
    check_distinct_means(dists)
    k = stats.num_classes
    off = ~np.eye(k, dtype=bool)
    terms = (V[:, None] + V[None, :]) / (2.0 * np.where(off, dists, 1.0))
    return float(terms[off].sum())


def simplex_target(k: int) -> float:
    """Pairwise cosine of a centered simplex ETF with k vertices."""
    return -1.0 / (k - 1)


def pairwise_cosines(stats: ClassStats) -> Matrix:
    centered = stats.means - stats.global_mean
    norms = np.linalg.norm(centered, axis=1)
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise CollapsedMeansError(int(zero[0]))
    unit = centered / norms[:, None]
    cos = unit @ unit.T
    cos = 0.5 * (cos + cos.T)
    np.fill_diagonal(cos, 1.0)
    return cos


def mean_angle_deviation(cos: Matrix) -> float:
    """Mean |cos - (-1/(k-1))| over unordered class pairs."""
    k = cos.shape[0]
    iu = np.triu_indices(k, 1)
    return float(np.abs(cos[iu] - simplex_target(k)).mean())


def softmax_hessian_blocks(probs: Matrix) -> np.ndarray:
    """Per-sample diag(p) - p p^T, (n, k, k), diagonal as p_s * sum_{j != s} p_j."""
    blocks = -probs[:, :, None] * probs[:, None, :]
    k = probs.shape[1]
    idx = np.arange(k)
    blocks[:, idx, idx] = probs * complement_sums(probs)
    return blocks


def hessian_trace_blocks(w: Matrix, phi: Matrix, probs: Matrix) -> Matrix:
    """
    T[s, s'] = Tr(H_{s,s'}) of mean softmax-CE w.r.t. classifier rows w_s, w_s':
    (1/n) sum_x (p_s delta_ss' - p_s p_s') ||phi(x)||^2.
    """
    w = np.asarray(w, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    probs = np.asarray(probs, dtype=np.float64)
    n, d = phi.shape
    k = w.shape[0]
    if w.shape != (k, d) or probs.shape != (n, k):
        raise ShapeError("hessian_trace_blocks", w.shape, phi.shape, probs.shape)
    a = row_sq_norms(phi)
    return np.einsum("x,xij->ij", a, softmax_hessian_blocks(probs)) / n


def relative_flatness(w: Matrix, T: Matrix) -> float:
    """kappa = sum_{s,s'} <w_s, w_s'> T[s, s']."""
    w = np.asarray(w, dtype=np.float64)
    if T.shape != (w.shape[0], w.shape[0]):
        raise ShapeError("relative_flatness", w.shape, T.shape)
    return float(np.sum((w @ w.T) * T))


def simplified_flatness(w: Matrix, T: Matrix) -> float:
    """||w||_F^2 * Tr(H), an upper bound on relative_flatness."""
    w = np.asarray(w, dtype=np.float64)
    return float(np.sum(w * w) * np.trace(T))


def representativeness_kde(train_phi: Matrix, eval_phi: Matrix, cfg: Optional[KdeConfig] = None) -> float:
    """
    Coverage deficiency of eval features by train features:
    mean over eval points of max(0, 1 - q(z)), q(z) = sum_i tau * exp(-||z - phi_i||^2 / (2 h^2)).
    0 = fully covered, 1 = uncovered.
    """
    cfg = cfg or KdeConfig()
    train_phi = np.asarray(train_phi, dtype=np.float64)
    eval_phi = np.asarray(eval_phi, dtype=np.float64)
    if train_phi.ndim != 2 or eval_phi.ndim != 2 or train_phi.shape[1] != eval_phi.shape[1]:
        raise ShapeError("representativeness_kde", train_phi.shape, eval_phi.shape)
    if len(train_phi) == 0 or len(eval_phi) == 0:
        raise ValueError("representativeness needs nonempty train and eval features")

    n, d = train_phi.shape
    h = cfg.bandwidth
    kde = KernelDensity(kernel="gaussian", bandwidth=h).fit(train_phi)
    # score_samples is log of the normalized density (1/n) sum N(z; phi_i, h^2 I)
    log_q = (
        kde.score_samples(eval_phi)
        + np.log(cfg.sample_weight)
        + np.log(n)
        + 0.5 * d * np.log(2.0 * np.pi * h * h)
    )
    q = np.exp(np.minimum(log_q, 0.0))
    return float(np.mean(1.0 - q))


def _undefined(metric: str, err: Exception) -> float:
    log.warning(f"{metric} undefined ({err}); recording NaN")
    return float("nan")


def cluster_metrics(
    phi: Matrix, labels: ArrayLike, num_classes: int, mode: NccMode = NccMode.MEAN_VARIANCE,
) -> Tuple[float, float]:
    """NCC and mean angle deviation; NaN when the class statistics are degenerate."""
    try:
        stats = class_stats(phi, labels, num_classes)
    except EmptyClassError as e:
        return _undefined("NCC", e), float("nan")
    try:
        ncc_value = ncc(stats, mode)
    except CollapsedMeansError as e:
        ncc_value = _undefined("NCC", e)
    try:
        angle = mean_angle_deviation(pairwise_cosines(stats))
    except CollapsedMeansError as e:
        angle = _undefined("mean angle deviation", e)
    return ncc_value, angle


def class_radius_scale(train_phi: Matrix, train_labels: ArrayLike, num_classes: int, radius: float) -> float:
    """Factor that brings the RMS distance of the class means from their global mean to ``radius``."""
    stats = class_stats(train_phi, train_labels, num_classes)
    rms = float(np.sqrt(np.mean(stats.radii ** 2)))
    if rms == 0.0:
        raise CollapsedMeansError(0)
    return radius / rms


def coverage_score(
    train_phi: Matrix,
    train_labels: ArrayLike,
    eval_phi: Matrix,
    num_classes: int,
    cfg: Optional[KdeConfig] = None,
) -> float:
    """
    representativeness_kde on features rescaled per cfg.feature_scale.

    class_radius: both feature sets are multiplied by radius / (RMS class-mean radius
    of the train features). NaN when that radius is undefined or zero.
    """
    cfg = cfg or KdeConfig()
    if KdeScale(cfg.feature_scale) == KdeScale.NONE:
        return representativeness_kde(train_phi, eval_phi, cfg)
    try:
        scale = class_radius_scale(train_phi, train_labels, num_classes, cfg.radius)
    except (EmptyClassError, CollapsedMeansError) as e:
        return _undefined("representativeness", e)
    return representativeness_kde(
        np.asarray(train_phi, dtype=np.float64) * scale,
        np.asarray(eval_phi, dtype=np.float64) * scale,
        cfg,
    )


def geometry_report(
    w: Matrix,
    phi: Matrix,
    probs: Matrix,
    labels: ArrayLike,
    num_classes: int,
    train_phi: Matrix,
    train_labels: ArrayLike,
    eval_phi: Matrix,
    mode: NccMode = NccMode.MEAN_VARIANCE,
    kde: Optional[KdeConfig] = None,
    step: int = 0,
) -> GeometryReport:
    """
    All geometry measurements of one snapshot. NCC, kappa and angles use (phi, probs,
    labels); representativeness scores eval_phi against the train features.
    Undefined cluster metrics are NaN.
    """
    ncc_value, angle = cluster_metrics(phi, labels, num_classes, mode)
    T = hessian_trace_blocks(w, phi, probs)
    return GeometryReport(
        step=step,
        ncc=ncc_value,
        kappa=relative_flatness(w, T),
        kappa_simplified=simplified_flatness(w, T),
        mean_angle_dev=angle,
        representativeness=coverage_score(train_phi, train_labels, eval_phi, num_classes, kde),
    )
