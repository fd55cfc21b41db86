"""Sparse and dense matrix primitives.

Sparse matrices are ``scipy.sparse.csr_array`` objects kept in canonical form:
float64 values, sorted column indices within each row, no duplicate entries
and no explicitly stored zeros. Dense matrices are C-ordered float64 ndarrays.

Products are row-serial with ascending column order inside each row, so a
given input always yields bit-identical output.
"""

import numpy as np
import scipy.sparse as sp


class ShapeError(ValueError):
    """Raised when operand shapes do not conform."""


class StructuralError(ValueError):
    """Raised for out-of-bounds indices or malformed CSR structure."""


def _canonical(m):
    m = sp.csr_array(m, dtype=np.float64)
    m.sum_duplicates()
    m.eliminate_zeros()
    m.sort_indices()
    m.has_canonical_format = True
    return m


def from_triplets(rows, cols, vals, shape):
    """Assemble a canonical CSR matrix; duplicate positions are summed."""
    rows = np.asarray(rows, dtype=np.int64).ravel()
    cols = np.asarray(cols, dtype=np.int64).ravel()
    vals = np.asarray(vals, dtype=np.float64).ravel()
    n_rows, n_cols = (int(s) for s in shape)
    if not (len(rows) == len(cols) == len(vals)):
        raise StructuralError("rows, cols and vals must have equal length")
    if len(rows) and (rows.min() < 0 or rows.max() >= n_rows
                      or cols.min() < 0 or cols.max() >= n_cols):
        raise StructuralError(f"triplet index out of bounds for shape {(n_rows, n_cols)}")
    return _canonical(sp.coo_array((vals, (rows, cols)), shape=(n_rows, n_cols)))


def canonicalize(m):
    """Return ``m`` as a canonical CSR matrix (no-op on canonical input)."""
    return _canonical(m)


def is_canonical(m) -> bool:
    if not isinstance(m, (sp.csr_array, sp.csr_matrix)) or m.dtype != np.float64:
        return False
    n_rows, n_cols = m.shape
    offs, idx = m.indptr, m.indices
    if len(offs) != n_rows + 1 or offs[0] != 0 or offs[-1] != len(idx):
        return False
    if np.any(np.diff(offs) < 0):
        return False
    if len(idx) and (idx.min() < 0 or idx.max() >= n_cols):
        return False
    row_of = np.repeat(np.arange(n_rows), np.diff(offs))
    same_row = row_of[1:] == row_of[:-1]
    if np.any(np.diff(idx.astype(np.int64))[same_row] <= 0):
        return False
    return not np.any(m.data == 0)


def identity(n):
    return _canonical(sp.identity(n, format="csr"))


def as_dense(x):
    """Coerce to a C-ordered float64 2-D array and check finiteness."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got ndim={x.ndim}")
    if not np.all(np.isfinite(x)):
        raise ValueError("dense matrix contains non-finite entries")
    return x


def spmm(s, d):
    """Sparse times dense product."""
    d = np.ascontiguousarray(d, dtype=np.float64)
    vector = d.ndim == 1
    if vector:
        d = d[:, None]
    if s.shape[1] != d.shape[0]:
        raise ShapeError(f"cannot multiply {s.shape} by {d.shape}")
    out = np.asarray(s @ d, dtype=np.float64)
    return out[:, 0] if vector else out


def transpose(s):
    return _canonical(s.T)


def scale_rows(s, v):
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (s.shape[0],):
        raise ShapeError(f"row scale of length {v.shape} for matrix {s.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("row scale must be finite")
    out = sp.csr_array(s, dtype=np.float64, copy=True)
    out.data *= np.repeat(v, np.diff(out.indptr))
    return _canonical(out)


def scale_cols(s, v):
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (s.shape[1],):
        raise ShapeError(f"column scale of length {v.shape} for matrix {s.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("column scale must be finite")
    out = sp.csr_array(s, dtype=np.float64, copy=True)
    out.data *= v[out.indices]
    return _canonical(out)


def spgemm(a, b):
    """Sparse times sparse product."""
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return _canonical(a @ b)


def same_pattern(a, b) -> bool:
    return (a.shape == b.shape
            and np.array_equal(a.indptr, b.indptr)
            and np.array_equal(a.indices, b.indices))
