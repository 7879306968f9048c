"""Minimal 2-D float64 array helpers.

A "matrix" here is a C-contiguous ``numpy.ndarray`` of dtype float64 with
``ndim == 2``; one sample per row. The helpers check shapes up front and
raise :class:`ShapeError` instead of relying on numpy broadcasting, which
would silently accept several of the mismatches we care about.

Reductions use ``numpy.add.reduce`` (fixed summation order) and ``matmul``
is a compiled kernel rather than BLAS, whose kernel choice changes the
rounding with matrix size and thread count. Identical inputs therefore give
bitwise identical outputs, and a sample's result does not depend on what
else is in its batch.
"""

from __future__ import annotations

from typing import Literal, Sequence

import numba
import numpy as np

DTYPE = np.float64
_ROW_BLOCK = 4
_COL_BLOCK = 256


class ShapeError(ValueError):
    pass


def as_matrix(values) -> np.ndarray:
    """Coerce nested sequences or arrays to a contiguous float64 matrix."""
    a = np.ascontiguousarray(values, dtype=DTYPE)
    if a.ndim == 1:
        a = a.reshape(1, -1)
    if a.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got {a.ndim} dimensions")
    return a


def zeros(rows: int, cols: int) -> np.ndarray:
    return np.zeros((rows, cols), dtype=DTYPE)


def identity(n: int) -> np.ndarray:
    return np.eye(n, dtype=DTYPE)


@numba.njit(cache=True, boundscheck=False)
def _matmul_kernel(a, b, out):
    m, depth = a.shape
    n = b.shape[1]
    acc = np.empty((_ROW_BLOCK, _COL_BLOCK))
    for i0 in range(0, m, _ROW_BLOCK):
        h = min(_ROW_BLOCK, m - i0)
        for j0 in range(0, n, _COL_BLOCK):
            w = min(_COL_BLOCK, n - j0)
            acc[:, :] = 0.0
            # every out[i, j] accumulates k = 0, 1, ..., depth-1 in order
            for k in range(depth):
                brow = b[k, j0:j0 + w]
                for i in range(h):
                    aik = a[i0 + i, k]
                    for j in range(w):
                        acc[i, j] += aik * brow[j]
            for i in range(h):
                for j in range(w):
                    out[i0 + i, j0 + j] = acc[i, j]
    return out


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product with a fixed left-to-right sum over the inner index.

    Blocking only tiles rows and columns, so each entry's rounding is
    independent of the batch size, the tiling and the machine's thread count.
    """
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError("matmul expects 2-D operands")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    a = np.ascontiguousarray(a, dtype=DTYPE)
    b = np.ascontiguousarray(b, dtype=DTYPE)
    out = np.empty((a.shape[0], b.shape[1]), dtype=DTYPE)
    return _matmul_kernel(a, b, out)


def transpose(a: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(a.T)


def add_row_vector(a: np.ndarray, v: np.ndarray) -> np.ndarray:
    if v.ndim != 2 or v.shape[0] != 1 or v.shape[1] != a.shape[1]:
        raise ShapeError(f"row vector {v.shape} does not match matrix {a.shape}")
    return a + v


def reduce_sum(a: np.ndarray, axis: Literal["rows", "cols", "all"] = "all"):
    """Sum a matrix.

    ``"rows"`` collapses the row index (one total per column, shape 1 x cols),
    ``"cols"`` collapses the column index (shape rows x 1), ``"all"`` returns a
    Python float.
    """
    if axis == "all":
        return float(np.add.reduce(a.ravel()))
    if axis == "rows":
        return np.add.reduce(a, axis=0, keepdims=True)
    if axis == "cols":
        return np.add.reduce(a, axis=1, keepdims=True)
    raise ValueError(f"unknown axis {axis!r}")


def argmax_rows(a: np.ndarray) -> list[int]:
    if a.ndim != 2 or a.shape[1] < 1:
        raise ShapeError("argmax_rows needs at least one column")
    # numpy returns the first occurrence on ties
    return np.argmax(a, axis=1).tolist()


def has_nan(a: np.ndarray | Sequence[np.ndarray]) -> bool:
    if isinstance(a, np.ndarray):
        return bool(np.isnan(a).any())
    return any(bool(np.isnan(x).any()) for x in a)
