"""
Modular-arithmetic datasets: generation, one-hot encoding and seeded splits.
"""
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from numpy.typing import NDArray

from models.configs import ModTaskConfig
from models.enums import Operation, SplitRole
from utils.logger import log
from utils.numkit import Matrix, RngState

_OPS = {
    Operation.ADD: np.add,
    Operation.SUB: np.subtract,
    Operation.MUL: np.multiply,
}


@dataclass
class Dataset:
    """Pairs (a, b), labels (a op b) mod p and their one-hot encodings."""
    p: int
    inputs: NDArray[np.int64]  # (n, 2)
    labels: NDArray[np.int64]  # (n,)
    encoded: Matrix            # (n, 2p)
    role: str = "full"

    def __len__(self) -> int:
        return len(self.labels)

    def subset(self, indices: NDArray[np.int64], role: str) -> "Dataset":
        return Dataset(
            p=self.p,
            inputs=self.inputs[indices],
            labels=self.labels[indices],
            encoded=self.encoded[indices],
            role=role,
        )


def apply_op(op: Operation, a, b, p: int):
    return _OPS[Operation(op)](a, b) % p


def generate_mod_dataset(cfg: ModTaskConfig) -> Dataset:
    """All p^2 pairs in row-major (a, b) order."""
    p = cfg.p
    if p < 2:
        raise ValueError(f"modulus must be >= 2, got {p}")

    a, b = np.meshgrid(np.arange(p), np.arange(p), indexing="ij")
    inputs = np.stack([a.ravel(), b.ravel()], axis=1).astype(np.int64)
    labels = apply_op(cfg.op, inputs[:, 0], inputs[:, 1], p).astype(np.int64)
    dataset = Dataset(p=p, inputs=inputs, labels=labels, encoded=np.empty((0, 2 * p)))
    dataset.encoded = encode_inputs(dataset)

    log.debug(f"Generated {len(dataset)} samples for ({Operation(cfg.op).value} mod {p})")
    return dataset


def encode_inputs(d: Dataset) -> Matrix:
    """One-hot concatenation: a at index a, b at index p + b."""
    p = d.p
    inputs = np.asarray(d.inputs)
    if inputs.ndim != 2 or inputs.shape[1] != 2:
        raise ValueError(f"inputs must be (n, 2) pairs, got shape {inputs.shape}")
    bad = (inputs < 0) | (inputs >= p)
    if bad.any():
        row = int(np.argwhere(bad.any(axis=1))[0, 0])
        raise ValueError(f"token out of range [0, {p}) in pair {tuple(inputs[row])} (row {row})")

    encoded = np.zeros((len(inputs), 2 * p), dtype=np.float64)
    rows = np.arange(len(inputs))
    encoded[rows, inputs[:, 0]] = 1.0
    encoded[rows, p + inputs[:, 1]] = 1.0
    return encoded


def decode_inputs(encoded: Matrix, p: int) -> NDArray[np.int64]:
    """Inverse of encode_inputs."""
    encoded = np.asarray(encoded)
    return np.stack([encoded[:, :p].argmax(axis=1), encoded[:, p:].argmax(axis=1)], axis=1)


def split_dataset(d: Dataset, fraction: float, seed: RngState) -> Tuple[Dataset, Dataset]:
    """Disjoint train/validation split; |train| = floor(fraction * n)."""
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"split fraction must be in (0, 1), got {fraction}")
    n = len(d)
    n_train = int(np.floor(fraction * n))
    if n_train == 0 or n_train == n:
        raise ValueError(f"split fraction {fraction} leaves an empty side for {n} samples")

    perm = seed.permutation(n)
    train_idx = np.sort(perm[:n_train])
    val_idx = np.sort(perm[n_train:])

    train = d.subset(train_idx, SplitRole.TRAIN.value)
    val = d.subset(val_idx, SplitRole.VALIDATION.value)
    log.debug(f"Split {n} samples into {len(train)} train / {len(val)} validation")
    return train, val


def build_task(cfg: ModTaskConfig) -> Tuple[Dataset, Dataset]:
    """Generate and split with the task seed."""
    full = generate_mod_dataset(cfg)
    return split_dataset(full, cfg.split_fraction, RngState(cfg.seed, stream=0))
