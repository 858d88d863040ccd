"""
Synthetic neural collapse: simplex ETF construction, NC1-NC4 predicate checks,
the collapse-implies-flatness bound and the softmax probabilities in the NC limit.
"""
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np
from numpy.typing import ArrayLike

from analysis.geometry import hessian_trace_blocks, relative_flatness
from config.settings import NC4_PROBE_COUNT
from models.configs import EtfConfig
from utils.numkit import Matrix, RngState, Vector, rng_normal, softmax_rows


def margin(k: int, M: float) -> float:
    """Logit gap delta = M^2 k / (k - 1) between true and false classes."""
    return M * M * k / (k - 1)


def prop1_bound(lambda_nc: float, k: int, M: float) -> float:
    """lambda^2 k^3 M^4 e^{-lambda delta} / (1 + (k - 1) e^{-lambda delta})^2."""
    e = np.exp(-lambda_nc * margin(k, M))
    return float(lambda_nc ** 2 * k ** 3 * M ** 4 * e / (1.0 + (k - 1) * e) ** 2)


def nc_limit_probs(lambda_nc: float, k: int, M: float) -> tuple:
    """(p_true, p_other) of a collapsed sample; p_true + (k - 1) p_other = 1."""
    e = np.exp(-lambda_nc * margin(k, M))
    z = 1.0 + (k - 1) * e
    return 1.0 / z, e / z


@dataclass
class EtfConstruction:
    means: Matrix        # (k, d)
    mu_g: Vector         # (d,)
    w: Matrix            # (k, d), w_j = lambda (mu_j - mu_g)
    b: Vector            # (k,)
    phi: Matrix          # (k, d), one collapsed sample per class
    labels: np.ndarray   # (k,)
    cfg: EtfConfig

    @property
    def logits(self) -> Matrix:
        return self.phi @ self.w.T + self.b

    def centered(self) -> "EtfConstruction":
        """Same network with features shifted by -mu_g and the shift folded into the bias."""
        return EtfConstruction(
            means=self.means - self.mu_g,
            mu_g=np.zeros_like(self.mu_g),
            w=self.w,
            b=self.b + self.w @ self.mu_g,
            phi=self.phi - self.mu_g,
            labels=self.labels,
            cfg=self.cfg,
        )


def build_etf(cfg: EtfConfig) -> EtfConstruction:
    """
    Centered simplex of radius M in the first k coordinates, zero elsewhere,
    translated by a seeded global mean; classifier and biases satisfy NC3 and
    b_j + lambda (mu_j - mu_g)^T mu_g = bias_base.
    """
    k, d, M, lam = cfg.k, cfg.d, cfg.M, cfg.lambda_nc
    if d < k:
        raise ValueError(f"feature dimension d={d} must be >= k={k}")

    simplex = np.eye(k) - np.full((k, k), 1.0 / k)
    simplex *= M / np.sqrt((k - 1) / k)
    centered = np.zeros((k, d))
    centered[:, :k] = simplex

    mu_g = rng_normal(RngState(cfg.seed, stream=2), d, 0.0, cfg.global_mean_scale)
    means = centered + mu_g
    w = lam * centered
    b = cfg.bias_base - lam * centered @ mu_g
    return EtfConstruction(
        means=means, mu_g=mu_g, w=w, b=b, phi=means.copy(), labels=np.arange(k), cfg=cfg,
    )


def bias_residual(etf: EtfConstruction) -> float:
    """max_j |b_j + lambda (mu_j - mu_g)^T mu_g - bias_base|."""
    lam = etf.cfg.lambda_nc
    rest = etf.b + lam * (etf.means - etf.mu_g) @ etf.mu_g
    return float(np.max(np.abs(rest - etf.cfg.bias_base)))


def etf_flatness(etf: EtfConstruction, center: bool = True) -> float:
    """kappa of the construction; ``center`` evaluates it on features relative to mu_g."""
    net = etf.centered() if center else etf
    probs = softmax_rows(net.logits)
    return relative_flatness(net.w, hessian_trace_blocks(net.w, net.phi, probs))


class NcChecks(NamedTuple):
    nc1: bool
    nc2: bool
    nc3: bool
    nc4: bool

    def all(self) -> bool:
        return self.nc1 and self.nc2 and self.nc3 and self.nc4


def check_nc(
    means: Matrix,
    mu_g: Vector,
    w: Matrix,
    b: Vector,
    phi: Matrix,
    labels: ArrayLike,
    tol: float,
    seed: int = 0,
    probe_count: int = NC4_PROBE_COUNT,
) -> NcChecks:
    means = np.asarray(means, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    k = means.shape[0]
    centered = means - mu_g

    # NC1: features sit on their class means
    nc1 = bool(np.max(np.linalg.norm(phi - means[labels], axis=1)) <= tol)

    # NC2: equal radii and equiangular Gram matrix
    radii = np.linalg.norm(centered, axis=1)
    M = radii.mean()
    gram = centered @ centered.T
    off = ~np.eye(k, dtype=bool)
    nc2 = bool(
        np.max(np.abs(radii - M)) <= tol
        and np.max(np.abs(gram[off] - (-M * M / (k - 1)))) <= tol
    )

    # NC3: w_j = lambda (mu_j - mu_g) for a least-squares lambda > 0
    denom = np.sum(centered * centered)
    lam = np.sum(w * centered) / denom if denom > 0 else 0.0
    nc3 = bool(lam > 0 and np.max(np.linalg.norm(w - lam * centered, axis=1)) <= tol)

    # NC4: argmax logits == nearest class mean on features, means and random probes
    lo, hi = means.min(axis=0), means.max(axis=0)
    probes = RngState(seed, stream=3).uniform(lo, hi, (probe_count, means.shape[1]))
    h = np.vstack([phi, means, probes])
    by_logit = np.argmax(h @ w.T + b, axis=1)
    by_mean = np.argmin(
        np.einsum("hkd,hkd->hk", h[:, None, :] - means[None], h[:, None, :] - means[None]), axis=1
    )
    nc4 = bool(np.array_equal(by_logit, by_mean))

    return NcChecks(nc1, nc2, nc3, nc4)


def check_etf(etf: EtfConstruction, tol: float, phi: Optional[Matrix] = None) -> NcChecks:
    return check_nc(
        etf.means, etf.mu_g, etf.w, etf.b, etf.phi if phi is None else phi, etf.labels, tol,
        seed=etf.cfg.seed,
    )


def decay_slope(k: int, M: float, lambdas: Sequence[float], **etf_kwargs) -> tuple:
    """log kappa along a lambda ladder and its terminal discrete slope."""
    d = etf_kwargs.pop("d", k + 1)
    log_kappa = []
    for lam in lambdas:
        etf = build_etf(EtfConfig(k=k, d=d, M=M, lambda_nc=lam, **etf_kwargs))
        log_kappa.append(np.log(etf_flatness(etf)))
    slope = (log_kappa[-1] - log_kappa[-2]) / (lambdas[-1] - lambdas[-2])
    return np.array(log_kappa), float(slope)
