"""Deterministic dense linear algebra primitives.

Matrices are 2-D ``float64`` ndarrays in row-major order; a "head stack" is a
3-D ndarray with heads on axis 0 and one matrix per head. All reductions over
the inner dimension run in fixed sequential order, so every result is
bit-identical to a naive loop and bit-reproducible across runs.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import DimensionError, NonFiniteInputError

__all__ = [
    "as_matrix",
    "as_head_stack",
    "matmul",
    "softmax_rows",
    "row_project",
    "row_reject",
    "dump_tensor",
    "load_tensor",
]

# Projection onto a direction with squared norm at or below this threshold is
# defined as the zero vector.
DEFAULT_EPS = 1e-12

_MAGIC = b"ONGT"


def as_matrix(x, name: str = "matrix") -> np.ndarray:
    """Coerce ``x`` to a finite 2-D float64 array, raising on bad input."""
    m = np.asarray(x, dtype=np.float64)
    if m.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {m.shape}")
    if not np.isfinite(m).all():
        raise NonFiniteInputError(f"{name} contains non-finite entries")
    return m


def as_head_stack(x, name: str = "head stack") -> np.ndarray:
    """Coerce ``x`` to a finite (heads, rows, cols) float64 array, heads >= 1."""
    s = np.asarray(x, dtype=np.float64)
    if s.ndim != 3:
        raise DimensionError(f"{name} must be 3-D (heads, rows, cols), got shape {s.shape}")
    if s.shape[0] < 1:
        raise DimensionError(f"{name} needs at least one head, got shape {s.shape}")
    if not np.isfinite(s).all():
        raise NonFiniteInputError(f"{name} contains non-finite entries")
    return s


def matmul(a, b) -> np.ndarray:
    """Matrix product with sequential accumulation over the inner dimension.

    Accumulates one rank-1 term per inner index, in index order, which makes
    the result bit-identical to the classic triple loop.
    """
    a = as_matrix(a, "left operand")
    b = as_matrix(b, "right operand")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(
            f"cannot multiply {a.shape[0]}x{a.shape[1]} by {b.shape[0]}x{b.shape[1]}: "
            f"inner dimensions {a.shape[1]} and {b.shape[0]} differ"
        )
    out = np.zeros((a.shape[0], b.shape[1]))
    for t in range(a.shape[1]):
        out += a[:, t, None] * b[None, t, :]
    return out


def softmax_rows(m, scale: float) -> np.ndarray:
    """Row-wise softmax of ``m * scale``, stabilised by max subtraction.

    ``scale`` is typically ``1/sqrt(d_k)``. Every output row is nonnegative
    and sums to 1.
    """
    m = as_matrix(m)
    scale = float(scale)
    if not np.isfinite(scale) or scale <= 0.0:
        raise ValueError(f"scale must be a positive finite real, got {scale}")
    z = m * scale
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _projection_coefficients(a: np.ndarray, b: np.ndarray, eps: float) -> np.ndarray:
    # <a_i, b_i> / <b_i, b_i> per row, zero where <b_i, b_i> <= eps
    bb = (b * b).sum(axis=1, keepdims=True)
    ab = (a * b).sum(axis=1, keepdims=True)
    safe = bb > eps
    return np.where(safe, ab / np.where(safe, bb, 1.0), 0.0)


def row_project(a, b, eps: float = DEFAULT_EPS) -> np.ndarray:
    """Project each row of ``a`` onto the corresponding row of ``b``.

    Rows of ``b`` with squared norm at or below ``eps`` project to zero.
    """
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape != b.shape:
        raise DimensionError(f"row_project needs equal shapes, got {a.shape} and {b.shape}")
    if eps < 0:
        raise ValueError(f"eps must be >= 0, got {eps}")
    return _projection_coefficients(a, b, eps) * b


def row_reject(a, b, eps: float = DEFAULT_EPS) -> np.ndarray:
    """Per-row orthogonal rejection: ``a - row_project(a, b, eps)``.

    Where a row of ``b`` is (near-)zero the projection is zero, so the full
    row of ``a`` is returned.
    """
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape != b.shape:
        raise DimensionError(f"row_reject needs equal shapes, got {a.shape} and {b.shape}")
    if eps < 0:
        raise ValueError(f"eps must be >= 0, got {eps}")
    return a - _projection_coefficients(a, b, eps) * b


def dump_tensor(path, arr) -> None:
    """Write an array as magic ``ONGT``, u32-LE rank and dims, f64-LE entries."""
    arr = np.ascontiguousarray(np.asarray(arr, dtype=np.float64))
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", arr.ndim))
        for d in arr.shape:
            fh.write(struct.pack("<I", d))
        fh.write(arr.astype("<f8").tobytes(order="C"))


def load_tensor(path) -> np.ndarray:
    """Read an array written by :func:`dump_tensor`."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _MAGIC:
            raise ValueError(f"bad tensor file magic {magic!r}, expected {_MAGIC!r}")
        (rank,) = struct.unpack("<I", fh.read(4))
        dims = struct.unpack("<" + "I" * rank, fh.read(4 * rank))
        data = np.frombuffer(fh.read(), dtype="<f8")
    expected = int(np.prod(dims)) if dims else 1
    if data.size != expected:
        raise ValueError(f"tensor file has {data.size} entries, dims {dims} need {expected}")
    return data.reshape(dims).astype(np.float64)
