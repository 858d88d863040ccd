"""
Dense float64 numeric kernel: shape-checked products, stable softmax and a
seedable, platform-stable random stream.

All functions are pure. ``RngState`` is the only stateful object and must not be
shared across threads.
"""
from typing import Optional

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.special import log_softmax, softmax

from utils.errors import ShapeError

Matrix = NDArray[np.float64]
Vector = NDArray[np.float64]


def as_matrix(data: ArrayLike, rows: Optional[int] = None, cols: Optional[int] = None) -> Matrix:
    """Coerce to a 2-D float64 array, optionally reshaping a flat row-major buffer."""
    arr = np.asarray(data, dtype=np.float64)
    if rows is not None and cols is not None:
        if arr.size != rows * cols:
            raise ShapeError("as_matrix", arr.shape, (rows, cols))
        arr = arr.reshape(rows, cols)
    if arr.ndim != 2:
        raise ShapeError("as_matrix", arr.shape, ("rows", "cols"))
    return arr


def matmul(a: Matrix, b: Matrix) -> Matrix:
    """Matrix product with an explicit shape check."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError("matmul", a.shape, b.shape)
    return np.matmul(a, b)


def softmax_rows(logits: Matrix) -> Matrix:
    """Row-wise softmax (max-subtracted)."""
    logits = as_matrix(logits)
    return softmax(logits, axis=1)


def log_softmax_rows(logits: Matrix) -> Matrix:
    """Row-wise log-softmax, used for cross-entropy without log(0)."""
    logits = as_matrix(logits)
    return log_softmax(logits, axis=1)


def row_sq_norms(x: Matrix) -> Vector:
    return np.einsum("ij,ij->i", x, x)


def complement_sums(probs: Matrix) -> Matrix:
    """Entry (i, s) = sum of row i excluding column s, computed without 1 - p_s cancellation."""
    k = probs.shape[1]
    return probs @ (np.ones((k, k)) - np.eye(k))


class RngState:
    """Seeded PCG64 stream. ``stream`` selects an independent substream of the same seed."""

    def __init__(self, seed: int, stream: int = 0):
        if seed < 0:
            raise ValueError(f"seed must be a nonnegative 64-bit integer, got {seed}")
        self.seed = int(seed)
        self.stream = int(stream)
        self._generator = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence(self.seed, spawn_key=(self.stream,)))
        )

    def __repr__(self) -> str:
        return f"RngState(seed={self.seed}, stream={self.stream})"

    def normal(self, n: int, mean: float = 0.0, std: float = 1.0) -> Vector:
        return rng_normal(self, n, mean, std)

    def permutation(self, n: int) -> NDArray[np.int64]:
        return self._generator.permutation(n)

    def uniform(self, low: ArrayLike, high: ArrayLike, size) -> NDArray[np.float64]:
        return self._generator.uniform(low, high, size)

    @property
    def generator(self) -> np.random.Generator:
        return self._generator


def rng_normal(state: RngState, n: int, mean: float = 0.0, std: float = 1.0) -> Vector:
    """Draw ``n`` normal samples from ``state``; std = 0 returns the mean exactly."""
    if std < 0:
        raise ValueError(f"std must be >= 0, got {std}")
    if n < 0:
        raise ValueError(f"n must be >= 0, got {n}")
    draws = state.generator.standard_normal(n)
    if std == 0:
        return np.full(n, float(mean))
    return mean + std * draws
