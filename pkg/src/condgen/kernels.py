"""Bounded positive-definite kernels and the four-term pair statistic.

Two families are supported, both with values in ``(0, 1]`` and
``K(a, a) == 1``:

* ``gaussian``: ``K(a, b) = exp(-||a - b||^2 / (2 h^2))``
* ``laplace``:  ``K(a, b) = exp(-||a - b||_1 / h)``

``h`` is the bandwidth (length scale).  Squared distances are always
computed from explicit coordinate differences, never via the expanded
``|a|^2 + |b|^2 - 2ab`` form, so that identical inputs give exactly
zero distance and kernel value exactly one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist

KERNEL_FAMILIES = ("gaussian", "laplace")

# Rows per block when tiling large gram matrices.
_GRAM_BLOCK_ROWS = 2048


@dataclass(frozen=True)
class KernelConfig:
    """Kernel family plus a strictly positive bandwidth."""

    family: str
    bandwidth: float

    def __post_init__(self):
        if self.family not in KERNEL_FAMILIES:
            raise ValueError(
                f"unknown kernel family {self.family!r}; expected one of {KERNEL_FAMILIES}"
            )
        # `not (x > 0)` also rejects NaN.
        if not (float(self.bandwidth) > 0.0) or math.isinf(self.bandwidth):
            raise ValueError(f"bandwidth must be a positive finite float, got {self.bandwidth!r}")


@dataclass(frozen=True)
class PairedSample:
    """An observed response ``y`` and a generated response ``z`` in the same space."""

    y: np.ndarray
    z: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.y, dtype=np.float64)
        z = np.asarray(self.z, dtype=np.float64)
        if y.ndim != 1 or z.ndim != 1:
            raise ValueError("PairedSample fields must be 1-D vectors")
        if y.shape != z.shape:
            raise ValueError(f"y and z must share a dimension, got {y.shape} vs {z.shape}")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "z", z)


def kernel_values(config: KernelConfig, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Evaluate the kernel elementwise over broadcastable arrays.

    The trailing axis of ``a`` and ``b`` is the feature axis and must
    match; leading axes broadcast as usual.  Returns an array with the
    broadcast leading shape.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape[-1] != b.shape[-1]:
        raise ValueError(f"feature dimensions differ: {a.shape[-1]} vs {b.shape[-1]}")
    diff = a - b
    if config.family == "gaussian":
        sq = np.sum(diff * diff, axis=-1)
        return np.exp(-sq / (2.0 * config.bandwidth * config.bandwidth))
    l1 = np.sum(np.abs(diff), axis=-1)
    return np.exp(-l1 / config.bandwidth)


def eval_kernel(config: KernelConfig, a: np.ndarray, b: np.ndarray) -> float:
    """Kernel value for a single pair of vectors."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 1 or b.ndim != 1 or a.shape != b.shape:
        raise ValueError(f"expected two 1-D vectors of equal length, got {a.shape} and {b.shape}")
    return float(kernel_values(config, a, b))


def gram_matrix(config: KernelConfig, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Full kernel matrix ``K[i, j] = K(a_i, b_j)``, computed in row blocks.

    ``a`` is ``(n, q)`` and ``b`` is ``(m, q)``; the result is ``(n, m)``.
    Blocking keeps peak memory at ``O(block * m * q)`` instead of
    materialising the full ``(n, m, q)`` difference tensor.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError("gram_matrix expects 2-D sample arrays")
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"feature dimensions differ: {a.shape[1]} vs {b.shape[1]}")
    n = a.shape[0]
    out = np.empty((n, b.shape[0]), dtype=np.float64)
    for start in range(0, n, _GRAM_BLOCK_ROWS):
        stop = min(start + _GRAM_BLOCK_ROWS, n)
        out[start:stop] = kernel_values(config, a[start:stop, None, :], b[None, :, :])
    return out


def median_heuristic_bandwidth(points: np.ndarray) -> float:
    """Median of all pairwise Euclidean distances among ``points``.

    ``points`` is ``(n, q)`` with ``n >= 2``.  Falls back to ``1.0``
    when the median distance is zero (e.g. all points identical), so
    the result is always a valid bandwidth.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim == 1:
        points = points[:, None]
    if points.ndim != 2 or points.shape[0] < 2:
        raise ValueError("median heuristic needs a 2-D array with at least two rows")
    med = float(np.median(pdist(points)))
    return med if med > 0.0 else 1.0


def h_statistic(config: KernelConfig, wi: PairedSample, wj: PairedSample) -> float:
    """Four-term kernel statistic between two (observed, generated) pairs.

    ``H(w_i, w_j) = K(y_i, y_j) - K(y_i, z_j) - K(z_i, y_j) + K(z_i, z_j)``.

    Symmetric in its arguments and bounded in ``[-2, 2]`` for the
    kernels here.  When both pairs degenerate (``y == z`` on both
    sides) the terms cancel exactly and the result is ``0.0``.
    """
    if wi.y.shape != wj.y.shape:
        raise ValueError(f"pairs live in different spaces: {wi.y.shape} vs {wj.y.shape}")
    # grouped as (like terms) - (cross terms) so the value is bitwise
    # symmetric under swapping the arguments
    like = eval_kernel(config, wi.y, wj.y) + eval_kernel(config, wi.z, wj.z)
    cross = eval_kernel(config, wi.y, wj.z) + eval_kernel(config, wi.z, wj.y)
    return like - cross
