"""
Brute-force finite-difference oracles for gradients and Hessian block traces.
Used by tests and debug checks only; inputs are never mutated.
"""
from typing import Callable, Optional

import numpy as np

from models.configs import FdConfig
from models.enums import FdScheme
from utils.errors import OracleError
from utils.numkit import Matrix, Vector


def _eval(fn: Callable[[np.ndarray], float], theta: np.ndarray, coordinate) -> float:
    value = float(fn(theta))
    if not np.isfinite(value):
        raise OracleError(coordinate, value)
    return value


def _partial(
    fn: Callable[[np.ndarray], float], theta: np.ndarray, i: int, coord, eps: float, f0: Optional[float],
) -> float:
    """One difference quotient along flat coordinate i; forward when the base value f0 is given."""
    orig = theta.flat[i]
    theta.flat[i] = orig + eps
    f_plus = _eval(fn, theta, coord)
    if f0 is not None:
        theta.flat[i] = orig
        return (f_plus - f0) / eps
    theta.flat[i] = orig - eps
    f_minus = _eval(fn, theta, coord)
    theta.flat[i] = orig
    return (f_plus - f_minus) / (2.0 * eps)


def _base_value(fn: Callable[[np.ndarray], float], theta: np.ndarray, cfg: FdConfig) -> Optional[float]:
    return _eval(fn, theta, None) if FdScheme(cfg.scheme) == FdScheme.FORWARD else None


def fd_grad(scalar_fn: Callable[[np.ndarray], float], params: np.ndarray, cfg: Optional[FdConfig] = None) -> np.ndarray:
    """
    Finite-difference gradient, same shape as params. Central scheme:
    (f(theta + eps e_i) - f(theta - eps e_i)) / 2 eps, error O(eps^2);
    forward scheme: (f(theta + eps e_i) - f(theta)) / eps, error O(eps).
    """
    cfg = cfg or FdConfig()
    theta = np.array(params, dtype=np.float64, copy=True)
    f0 = _base_value(scalar_fn, theta, cfg)
    grad = np.zeros_like(theta)
    for i in range(theta.size):
        coord = np.unravel_index(i, theta.shape) if theta.ndim > 1 else i
        grad.flat[i] = _partial(scalar_fn, theta, i, coord, cfg.epsilon, f0)
    return grad


def fd_grad_coords(
    scalar_fn: Callable[[np.ndarray], float], params: np.ndarray, coords: np.ndarray, cfg: Optional[FdConfig] = None
) -> Vector:
    """fd_grad at selected flat coordinates only."""
    cfg = cfg or FdConfig()
    theta = np.array(params, dtype=np.float64, copy=True)
    f0 = _base_value(scalar_fn, theta, cfg)
    out = np.zeros(len(coords))
    for j, i in enumerate(coords):
        out[j] = _partial(scalar_fn, theta, int(i), int(i), cfg.epsilon, f0)
    return out


def fd_hessian_block_trace(
    loss_fn_of_w: Callable[[Matrix], float],
    w: Matrix,
    cfg: Optional[FdConfig] = None,
    grad_fn: Optional[Callable[[Matrix], Matrix]] = None,
) -> Matrix:
    """
    T[s, s'] = sum_t d^2 L / (d w[s, t] d w[s', t]).

    With ``grad_fn`` the analytic gradient is differenced once; otherwise a
    four-point mixed second difference of the loss is used.
    """
    cfg = cfg or FdConfig()
    w = np.array(w, dtype=np.float64, copy=True)
    k, d = w.shape
    T = np.zeros((k, k))

    if grad_fn is not None:
        eps = cfg.epsilon
        for s in range(k):
            for t in range(d):
                orig = w[s, t]
                w[s, t] = orig + eps
                g_plus = np.asarray(grad_fn(w), dtype=np.float64)
                w[s, t] = orig - eps
                g_minus = np.asarray(grad_fn(w), dtype=np.float64)
                w[s, t] = orig
                col = (g_plus[:, t] - g_minus[:, t]) / (2.0 * eps)
                if not np.all(np.isfinite(col)):
                    raise OracleError((s, t), float(col[~np.isfinite(col)][0]))
                T[:, s] += col
        return 0.5 * (T + T.T)

    eps = cfg.hessian_epsilon
    for s in range(k):
        for s2 in range(s, k):
            total = 0.0
            for t in range(d):
                vals = []
                for a, b in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
                    shifted = w.copy()
                    shifted[s, t] += a * eps
                    shifted[s2, t] += b * eps
                    vals.append(_eval(loss_fn_of_w, shifted, (s, s2, t)))
                total += (vals[0] - vals[1] - vals[2] + vals[3]) / (4.0 * eps * eps)
            T[s, s2] = T[s2, s] = total
    return T
