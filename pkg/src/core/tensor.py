"""
Dense float64 numeric substrate.

A ``Matrix`` is a C-contiguous float64 numpy array. Every kernel here works on
the last two axes, so the same code serves a single T x d matrix and a
(batch, T, d) stack during training.
"""
import math
from typing import Optional

import numpy as np
import numpy.typing as npt

from src.utils.errors import ShapeError

Matrix = npt.NDArray[np.float64]
Rng = np.random.Generator


def make_rng(seed: int) -> Rng:
    """PCG64 stream; identical across platforms for the same seed"""
    return np.random.Generator(np.random.PCG64(int(seed)))


def as_matrix(values, name: str = "matrix") -> Matrix:
    """
    Coerce to a finite float64 array with at least two axes

    Args:
        values: Array-like input
        name: Label used in error messages

    Returns:
        C-contiguous float64 array
    """
    arr = np.ascontiguousarray(values, dtype=np.float64)
    if arr.ndim < 2:
        raise ShapeError(f"{name} must have at least two axes", arr.shape)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def matmul(a: Matrix, b: Matrix) -> Matrix:
    """
    Matrix product over the last two axes

    Args:
        a: (..., n, m)
        b: (..., m, p)

    Returns:
        (..., n, p) product
    """
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError("matmul dimension mismatch", a.shape, b.shape)
    return np.matmul(a, b)


def softmax_rows(m: Matrix) -> Matrix:
    """Row softmax with per-row max subtraction"""
    shifted = m - np.max(m, axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=-1, keepdims=True)


def masked_softmax_rows(m: Matrix, bits: Matrix) -> Matrix:
    """
    Row softmax over the entries where ``bits`` is nonzero; everything else
    is exactly 0 and rows with no support are all zero

    Args:
        m: (..., T, T) scores
        bits: (T, T) 0/1 support

    Returns:
        Weights shaped like ``m``
    """
    keep = bits > 0
    top = np.max(np.where(keep, m, -np.inf), axis=-1, keepdims=True)
    top = np.where(np.isfinite(top), top, 0.0)
    e = np.exp(np.where(keep, m - top, -np.inf))
    total = np.sum(e, axis=-1, keepdims=True)
    return e / np.where(total > 0, total, 1.0)


def layer_norm_rows(
    m: Matrix,
    gain: npt.NDArray[np.float64],
    bias: npt.NDArray[np.float64],
    eps: float = 1e-6,
) -> Matrix:
    """
    Per-token normalization to zero mean and unit variance, then affine

    Args:
        m: (..., T, d) input
        gain: (d,) scale
        bias: (d,) shift
        eps: Variance floor, must be positive

    Returns:
        Normalized array with the shape of ``m``
    """
    if gain.shape[-1] != m.shape[-1] or bias.shape[-1] != m.shape[-1]:
        raise ShapeError("layer norm gain/bias width mismatch", m.shape, gain.shape, bias.shape)
    if eps <= 0:
        raise ValueError("eps must be positive")
    centered = m - np.mean(m, axis=-1, keepdims=True)
    var = np.mean(centered * centered, axis=-1, keepdims=True)
    return centered / np.sqrt(var + eps) * gain + bias


def relu(m: Matrix) -> Matrix:
    return np.maximum(m, 0.0)


def seeded_uniform_init(rows: int, cols: int, scale: float, rng: Rng) -> Matrix:
    """
    Uniform values in [-scale, scale]; advances ``rng`` deterministically

    Args:
        rows: Row count
        cols: Column count
        scale: Half-width of the interval (0 gives a zero matrix)
        rng: Generator to consume

    Returns:
        rows x cols matrix
    """
    if scale < 0:
        raise ValueError("scale must be non-negative")
    draws = rng.uniform(-1.0, 1.0, size=(rows, cols))
    return np.ascontiguousarray(draws * scale)


def glorot_scale(fan_in: int, fan_out: int) -> float:
    return math.sqrt(6.0 / (fan_in + fan_out))


def sinusoidal_positions(seq_len: int, width: int, base: float = 10000.0) -> Matrix:
    """Fixed sin/cos position table, shape (seq_len, width)"""
    pos = np.arange(seq_len, dtype=np.float64)[:, None]
    dims = np.arange(width, dtype=np.float64)[None, :]
    rates = np.power(base, -(2.0 * np.floor(dims / 2.0)) / width)
    angles = pos * rates
    table = np.where(dims % 2 == 0, np.sin(angles), np.cos(angles))
    return np.ascontiguousarray(table)


def check_square(m: Matrix, size: Optional[int] = None, name: str = "matrix") -> None:
    if m.ndim != 2 or m.shape[0] != m.shape[1] or (size is not None and m.shape[0] != size):
        expected = (size, size) if size is not None else ("T", "T")
        raise ShapeError(f"{name} must be square", m.shape, expected)
