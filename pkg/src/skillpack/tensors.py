"""Dense-tensor numerical kernels: SVD, truncation, magnitude pruning, norms.

Tensors are plain numpy arrays. Checkpoint payloads are float32/float16;
factorizations run in float64 intermediates and the factors are kept in
float64 until they are quantized or serialized.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg


def ensure_finite(arr: np.ndarray, name: str = "tensor") -> None:
    """Reject NaN/Inf coming in from external data."""
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")


def retained_count(alpha: float, n: int) -> int:
    """Number of elements kept when pruning n elements at retention ratio alpha.

    ceil(alpha * n), with products within 1e-9 of an integer snapped to it so
    that e.g. alpha=0.1, n=30 keeps 3 elements, not 4.
    """
    product = alpha * n
    nearest = round(product)
    if abs(product - nearest) < 1e-9:
        return max(int(nearest), 1) if n > 0 else 0
    return int(math.ceil(product))


@dataclass(frozen=True)
class SvdFactors:
    """Thin SVD a = u @ diag(sigma) @ vt.

    u has orthonormal columns, vt orthonormal rows, sigma is nonnegative
    and nonincreasing. Sign ambiguity is resolved by making the
    largest-magnitude element of each u column positive, so factors are
    reproducible across runs.
    """

    u: np.ndarray
    sigma: np.ndarray
    vt: np.ndarray

    @property
    def rank(self) -> int:
        return len(self.sigma)

    def reconstruct(self, dtype=np.float64) -> np.ndarray:
        out = (self.u * self.sigma) @ self.vt
        return out.astype(dtype)


@dataclass(frozen=True)
class SparseEntries:
    """Flat row-major positions and values retained by magnitude pruning."""

    shape: tuple[int, ...]
    indices: np.ndarray  # int64, strictly increasing
    values: np.ndarray

    def densify(self, dtype=np.float32) -> np.ndarray:
        out = np.zeros(self.shape, dtype=dtype).reshape(-1)
        out[self.indices] = self.values
        return out.reshape(self.shape)


def svd(a: np.ndarray) -> SvdFactors:
    """Full thin SVD of a 2-D matrix, computed in float64.

    Uses the bidiagonalization + implicit-shift QR LAPACK path (gesvd)
    rather than divide-and-conquer, so results are deterministic across
    repeated calls on the same data.
    """
    a = np.asarray(a)
    if a.ndim != 2:
        raise ValueError(f"svd requires a 2-D matrix, got shape {a.shape}")
    ensure_finite(a, "svd input")
    u, sigma, vt = scipy.linalg.svd(
        a.astype(np.float64), full_matrices=False, lapack_driver="gesvd"
    )
    # Fix signs: largest-|.| element of each left singular vector positive.
    anchor = np.argmax(np.abs(u), axis=0)
    flip = u[anchor, np.arange(u.shape[1])] < 0
    u[:, flip] *= -1.0
    vt[flip, :] *= -1.0
    return SvdFactors(u=u, sigma=sigma, vt=vt)


def truncate(factors: SvdFactors, rank: int) -> SvdFactors:
    """Keep the top-`rank` singular triplets; rank clamps at the full rank."""
    if rank < 1:
        raise ValueError("rank must be at least 1")
    if rank >= factors.rank:
        return factors
    return SvdFactors(
        u=factors.u[:, :rank],
        sigma=factors.sigma[:rank],
        vt=factors.vt[:rank, :],
    )


def magnitude_prune(a: np.ndarray, alpha: float) -> SparseEntries:
    """Keep the ceil(alpha*N) largest-|value| elements of a 2-D matrix.

    Ties broken toward the smaller flat row-major index, so the output is
    deterministic.
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"retention ratio must be in (0, 1], got {alpha}")
    a = np.asarray(a)
    if a.ndim != 2:
        raise ValueError(f"magnitude_prune requires a 2-D matrix, got shape {a.shape}")
    ensure_finite(a, "prune input")
    flat = a.reshape(-1)
    keep = retained_count(alpha, flat.size)
    order = np.argsort(-np.abs(flat), kind="stable")
    indices = np.sort(order[:keep]).astype(np.int64)
    return SparseEntries(shape=tuple(a.shape), indices=indices, values=flat[indices].copy())


def frobenius_rel_err(a: np.ndarray, b: np.ndarray) -> float:
    """||a - b||_F / ||a||_F; zero if both are zero, inf if only a is."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    denom = float(np.linalg.norm(a.astype(np.float64)))
    num = float(np.linalg.norm(a.astype(np.float64) - b.astype(np.float64)))
    if denom == 0.0:
        return 0.0 if num == 0.0 else math.inf
    return num / denom


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"incompatible matmul shapes: {a.shape} x {b.shape}")
    return a @ b
