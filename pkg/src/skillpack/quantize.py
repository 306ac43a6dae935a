"""Symmetric integer quantizers and the bit-packed code codec.

Two quantizers share one code/scale layout:

* round-to-nearest (RTN): scale = max|v| / (2^(k-1) - 1) per vector,
  codes = round(v / scale) with halves away from zero.
* calibrated (GPTQ-style): same grid, but columns are quantized in
  natural order and each column's rounding error is propagated to the
  not-yet-quantized columns through the Cholesky factor of the inverse
  damped activation Hessian, approximately minimizing ||m x - m^ x||^2.

Codes are symmetric, zero-point free: c in [-(2^(k-1)-1), 2^(k-1)-1].
An all-zero vector gets scale 0 and codes 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

MIN_BITS = 2
MAX_BITS = 16


def qmax(bits: int) -> int:
    return (1 << (bits - 1)) - 1


def _check_bits(bits: int) -> None:
    if bits < MIN_BITS:
        raise ValueError(f"quantizer width must be > 1 bit, got {bits}")
    if bits > MAX_BITS:
        raise ValueError(f"quantizer width above {MAX_BITS} bits is not supported, got {bits}")


@dataclass(frozen=True)
class BitGroup:
    """Contiguous range [begin, end) of quantized vectors sharing one width."""

    begin: int
    end: int
    bits: int

    def __post_init__(self):
        if self.begin < 0 or self.end <= self.begin:
            raise ValueError(f"empty or negative bit group [{self.begin}, {self.end})")
        _check_bits(self.bits)

    @property
    def length(self) -> int:
        return self.end - self.begin


def check_groups(groups, rank: int) -> None:
    """Groups must be contiguous, start at 0 and cover [0, rank) exactly."""
    if not groups:
        raise ValueError("at least one bit group is required")
    expect = 0
    for g in groups:
        if g.begin != expect:
            raise ValueError(f"bit groups must be contiguous from 0, got gap at {g.begin}")
        expect = g.end
    if expect != rank:
        raise ValueError(f"bit groups cover [0, {expect}) but rank is {rank}")


@dataclass(frozen=True)
class QuantizedMatrix:
    """Integer codes with one float32 scale per quantized vector.

    `axis` says which way the scales attach: "row" means scales[i] covers
    codes[i, :], "column" means scales[j] covers codes[:, j]. `groups`
    partition the scale axis into ranges of equal bit width.
    """

    codes: np.ndarray  # int32, same shape as the source matrix
    scales: np.ndarray  # float32, length = size of the scale axis
    groups: tuple[BitGroup, ...]
    axis: str  # "row" | "column"

    def __post_init__(self):
        if self.axis not in ("row", "column"):
            raise ValueError(f"unknown scale axis {self.axis!r}")
        n_vectors = self.codes.shape[0] if self.axis == "row" else self.codes.shape[1]
        check_groups(self.groups, n_vectors)

    def dequantize(self, dtype=np.float64) -> np.ndarray:
        scales = self.scales.astype(dtype)
        codes = self.codes.astype(dtype)
        if self.axis == "row":
            return codes * scales[:, None]
        return codes * scales[None, :]


def rtn_scales(m: np.ndarray, bits: int, axis: str = "row") -> np.ndarray:
    """Per-vector symmetric scales, rounded to their stored float32 values."""
    reduce_axis = 1 if axis == "row" else 0
    amax = np.max(np.abs(m.astype(np.float64)), axis=reduce_axis)
    return (amax / qmax(bits)).astype(np.float32)


def _encode(values: np.ndarray, scales64, bits: int) -> np.ndarray:
    """round(v / s) half-away-from-zero, codes 0 where the scale is 0."""
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(scales64 == 0.0, 0.0, values / scales64)
    codes = np.trunc(ratio + np.copysign(0.5, ratio))
    limit = qmax(bits)
    return np.clip(codes, -limit, limit).astype(np.int32)


def quantize_rtn(m: np.ndarray, bits: int, axis: str = "row") -> QuantizedMatrix:
    """Uncalibrated symmetric quantization with per-vector scales."""
    _check_bits(bits)
    m = np.asarray(m)
    if m.ndim != 2:
        raise ValueError(f"quantize_rtn requires a 2-D matrix, got shape {m.shape}")
    scales = rtn_scales(m, bits, axis)
    s64 = scales.astype(np.float64)
    broadcast = s64[:, None] if axis == "row" else s64[None, :]
    codes = _encode(m.astype(np.float64), broadcast, bits)
    n_vectors = m.shape[0] if axis == "row" else m.shape[1]
    group = BitGroup(0, n_vectors, bits)
    return QuantizedMatrix(codes=codes, scales=scales, groups=(group,), axis=axis)


def quantize_gptq(
    m: np.ndarray,
    x: np.ndarray,
    bits: int,
    damping: float = 0.01,
    scale_axis: str = "row",
) -> QuantizedMatrix:
    """Calibrated quantization of m (out x in) against activations x (in x s).

    Scales are fixed from the original matrix by the RTN rule before any
    compensation. The Hessian is damped by `damping` times the mean of its
    diagonal; a Hessian with an all-zero diagonal (no calibration signal)
    degrades to plain RTN, since every rounding is then cost-free.
    """
    _check_bits(bits)
    m = np.asarray(m)
    x = np.asarray(x)
    if m.ndim != 2 or x.ndim != 2:
        raise ValueError("quantize_gptq requires 2-D matrix and calibration inputs")
    if m.shape[1] != x.shape[0]:
        raise ValueError(
            f"calibration rows ({x.shape[0]}) must match matrix columns ({m.shape[1]})"
        )
    if x.shape[1] < 1:
        raise ValueError("calibration needs at least one sample")
    if scale_axis not in ("row", "column"):
        raise ValueError(f"unknown scale axis {scale_axis!r}")

    rows, cols = m.shape
    scales = rtn_scales(m, bits, scale_axis)
    s64 = scales.astype(np.float64)

    w = m.astype(np.float64).copy()
    x64 = x.astype(np.float64)
    hess = x64 @ x64.T
    mean_diag = float(np.trace(hess)) / cols
    n_vectors = rows if scale_axis == "row" else cols
    group = (BitGroup(0, n_vectors, bits),)

    if mean_diag == 0.0:
        broadcast = s64[:, None] if scale_axis == "row" else s64[None, :]
        codes = _encode(w, broadcast, bits)
        return QuantizedMatrix(codes=codes, scales=scales, groups=group, axis=scale_axis)

    hess[np.diag_indices(cols)] += damping * mean_diag
    try:
        chol_lower = np.linalg.cholesky(hess)
        hess_inv = scipy.linalg.cho_solve((chol_lower, True), np.eye(cols))
        hess_inv = (hess_inv + hess_inv.T) / 2.0
        chol_inv_upper = scipy.linalg.cholesky(hess_inv, lower=False)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
        raise ValueError("damped Hessian is singular; increase the damping factor") from None

    codes = np.zeros((rows, cols), dtype=np.int32)
    for j in range(cols):
        col = w[:, j]
        s_j = s64 if scale_axis == "row" else s64[j]
        c = _encode(col, s_j, bits)
        codes[:, j] = c
        err = (col - c.astype(np.float64) * s_j) / chol_inv_upper[j, j]
        if j + 1 < cols:
            w[:, j + 1 :] -= np.outer(err, chol_inv_upper[j, j + 1 :])
    return QuantizedMatrix(codes=codes, scales=scales, groups=group, axis=scale_axis)


def calibration_error(m: np.ndarray, dequantized: np.ndarray, x: np.ndarray) -> float:
    """||m x - m^ x||_F, the objective both quantizers target."""
    m64 = np.asarray(m, dtype=np.float64)
    return float(np.linalg.norm(m64 @ x - np.asarray(dequantized, dtype=np.float64) @ x))


def pack_codes(codes: np.ndarray, bits: int) -> bytes:
    """Pack signed codes at `bits` per value, LSB-first, zero-padded to a byte."""
    _check_bits(bits)
    flat = np.asarray(codes, dtype=np.int64).reshape(-1)
    limit = qmax(bits)
    if flat.size and (flat.min() < -limit or flat.max() > limit):
        raise ValueError(f"codes out of range for {bits}-bit packing")
    unsigned = (flat & ((1 << bits) - 1)).astype(np.uint32)
    bit_matrix = ((unsigned[:, None] >> np.arange(bits, dtype=np.uint32)) & 1).astype(np.uint8)
    return np.packbits(bit_matrix.reshape(-1), bitorder="little").tobytes()


def unpack_codes(buf: bytes, count: int, bits: int) -> np.ndarray:
    """Inverse of pack_codes; sign-extends each field. Range is NOT validated."""
    _check_bits(bits)
    needed = (count * bits + 7) // 8
    if len(buf) < needed:
        raise ValueError(f"code buffer too short: {len(buf)} bytes for {count} x {bits}-bit")
    raw = np.frombuffer(buf, dtype=np.uint8, count=needed)
    flat_bits = np.unpackbits(raw, bitorder="little")[: count * bits]
    weights = (1 << np.arange(bits, dtype=np.int64))
    unsigned = flat_bits.reshape(count, bits).astype(np.int64) @ weights
    unsigned[unsigned >= (1 << (bits - 1))] -= 1 << bits
    return unsigned.astype(np.int32)


def packed_size(count: int, bits: int) -> int:
    return (count * bits + 7) // 8
