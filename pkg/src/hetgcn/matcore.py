"""Matrix types and reference kernels.

Dense matrices are plain 2-D ``float32`` numpy arrays. Sparse matrices use
:class:`CsrMatrix`, a small immutable CSR container with strict invariants
(sorted, duplicate-free column indices and no stored zeros).

All kernels accumulate in float32 and in ascending index order, so results
are bit-reproducible run to run. Structurally different kernels (for
example grouped vs. row-wise SpMM) can still differ by fp32 reassociation,
which is why cross-kernel checks use a small absolute tolerance.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.io
import scipy.sparse

from .errors import ShapeError

DENSE_MAGIC = b"HGCN"
_DENSE_HEADER = struct.Struct("<4sIII")


def as_dense(x) -> np.ndarray:
    """Coerce ``x`` to a C-contiguous 2-D float32 array with both dims >= 1."""
    a = np.ascontiguousarray(x, dtype=np.float32)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise ShapeError(f"dense matrix must be 2-D and non-empty, got shape {a.shape}")
    return a


@dataclass(frozen=True, eq=False)
class CsrMatrix:
    rows: int
    cols: int
    row_ptr: np.ndarray
    col_idx: np.ndarray
    vals: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "row_ptr", np.ascontiguousarray(self.row_ptr, dtype=np.int64))
        object.__setattr__(self, "col_idx", np.ascontiguousarray(self.col_idx, dtype=np.int64))
        object.__setattr__(self, "vals", np.ascontiguousarray(self.vals, dtype=np.float32))
        for arr in (self.row_ptr, self.col_idx, self.vals):
            arr.setflags(write=False)
        self._check()

    def _check(self):
        rp, ci = self.row_ptr, self.col_idx
        if self.rows < 1 or self.cols < 1:
            raise ShapeError(f"CSR dims must be >= 1, got {self.rows}x{self.cols}")
        if rp.shape != (self.rows + 1,) or rp[0] != 0:
            raise ValueError("row_ptr must have length rows+1 and start at 0")
        if np.any(np.diff(rp) < 0):
            raise ValueError("row_ptr must be non-decreasing")
        if rp[-1] != ci.size or ci.size != self.vals.size:
            raise ValueError("row_ptr[-1], len(col_idx) and len(vals) must agree")
        if ci.size:
            if ci.min() < 0 or ci.max() >= self.cols:
                raise ValueError("column index out of range")
            # strictly increasing within a row: a non-increase is only legal at row starts
            step = np.diff(ci) <= 0
            starts = np.zeros(ci.size - 1, dtype=bool)
            inner_starts = rp[1:-1]
            inner_starts = inner_starts[(inner_starts > 0) & (inner_starts < ci.size)]
            starts[inner_starts - 1] = True
            if np.any(step & ~starts):
                raise ValueError("column indices must be strictly increasing within each row")
            if np.any(self.vals == 0):
                raise ValueError("explicitly stored zeros are not allowed")

    # construction -----------------------------------------------------------------

    @classmethod
    def empty(cls, rows: int, cols: int) -> "CsrMatrix":
        return cls(rows, cols, np.zeros(rows + 1, np.int64), np.zeros(0, np.int64), np.zeros(0, np.float32))

    @classmethod
    def from_coo(cls, rows, cols, vals, shape: tuple[int, int]) -> "CsrMatrix":
        """Build from triplets. Duplicates are summed (in float64), zeros dropped."""
        r = np.asarray(rows, dtype=np.int64).ravel()
        c = np.asarray(cols, dtype=np.int64).ravel()
        v = np.asarray(vals, dtype=np.float64).ravel()
        if not (r.size == c.size == v.size):
            raise ValueError("triplet arrays must have equal length")
        m, n = shape
        if r.size and (r.min() < 0 or r.max() >= m or c.min() < 0 or c.max() >= n):
            raise ShapeError("triplet index outside matrix shape")
        order = np.lexsort((c, r))
        r, c, v = r[order], c[order], v[order]
        if r.size:
            new = np.ones(r.size, dtype=bool)
            new[1:] = (r[1:] != r[:-1]) | (c[1:] != c[:-1])
            heads = np.flatnonzero(new)
            v = np.add.reduceat(v, heads)
            r, c = r[heads], c[heads]
        v32 = v.astype(np.float32)
        keep = v32 != 0
        r, c, v32 = r[keep], c[keep], v32[keep]
        row_ptr = np.zeros(m + 1, dtype=np.int64)
        np.cumsum(np.bincount(r, minlength=m), out=row_ptr[1:])
        return cls(m, n, row_ptr, c, v32)

    @classmethod
    def from_dense(cls, a) -> "CsrMatrix":
        a = as_dense(a)
        r, c = np.nonzero(a)
        return cls.from_coo(r, c, a[r, c], a.shape)

    @classmethod
    def from_scipy(cls, m) -> "CsrMatrix":
        coo = scipy.sparse.coo_matrix(m)
        return cls.from_coo(coo.row, coo.col, coo.data, coo.shape)

    # views --------------------------------------------------------------------

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)

    @property
    def nnz(self) -> int:
        return int(self.col_idx.size)

    def row_nnz(self) -> np.ndarray:
        return np.diff(self.row_ptr)

    def row_indices(self) -> np.ndarray:
        """Row index of every stored entry (COO row array)."""
        return np.repeat(np.arange(self.rows, dtype=np.int64), self.row_nnz())

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.shape, dtype=np.float32)
        out[self.row_indices(), self.col_idx] = self.vals
        return out

    def to_scipy(self) -> scipy.sparse.csr_matrix:
        return scipy.sparse.csr_matrix((self.vals, self.col_idx, self.row_ptr), shape=self.shape)

    def slice_rows(self, start: int, stop: int) -> "CsrMatrix":
        lo, hi = self.row_ptr[start], self.row_ptr[stop]
        return CsrMatrix(stop - start, self.cols, self.row_ptr[start:stop + 1] - lo,
                         self.col_idx[lo:hi], self.vals[lo:hi])

    def triplets(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.row_indices(), self.col_idx.copy(), self.vals.copy()

    def __eq__(self, other) -> bool:
        if not isinstance(other, CsrMatrix):
            return NotImplemented
        return (self.shape == other.shape
                and np.array_equal(self.row_ptr, other.row_ptr)
                and np.array_equal(self.col_idx, other.col_idx)
                and np.array_equal(self.vals.view(np.uint32), other.vals.view(np.uint32)))

    __hash__ = None

    def __repr__(self) -> str:
        return f"CsrMatrix({self.rows}x{self.cols}, nnz={self.nnz})"


def densify(a: CsrMatrix) -> np.ndarray:
    return a.to_dense()


def density(a: CsrMatrix) -> float:
    return a.nnz / (a.rows * a.cols)


# kernels ----------------------------------------------------------------------


def dense_gemm(a, b) -> np.ndarray:
    """C = A @ B with float32 accumulation in ascending inner-index order."""
    a, b = as_dense(a), as_dense(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"inner dimensions differ: {a.shape} @ {b.shape}")
    out = np.zeros((a.shape[0], b.shape[1]), dtype=np.float32)
    for l in range(a.shape[1]):
        out += a[:, l:l + 1] * b[l]
    return out


def spmm_rowwise(a: CsrMatrix, b) -> np.ndarray:
    """Row-wise product: C[i, :] = sum over stored (i, k, v) of v * B[k, :].

    Each output row accumulates its nonzeros in stored (ascending column)
    order. The loop runs over nonzero *position within a row*, which keeps
    the work vectorized across rows without changing per-row order.
    """
    b = as_dense(b)
    if a.cols != b.shape[0]:
        raise ShapeError(f"inner dimensions differ: {a.shape} @ {b.shape}")
    out = np.zeros((a.rows, b.shape[1]), dtype=np.float32)
    counts = a.row_nnz()
    if a.nnz == 0:
        return out
    starts = a.row_ptr[:-1]
    for t in range(int(counts.max())):
        rows = np.flatnonzero(counts > t)
        idx = starts[rows] + t
        out[rows] += a.vals[idx, None] * b[a.col_idx[idx]]
    return out


def normalize_adjacency(a: CsrMatrix) -> CsrMatrix:
    """Symmetric GCN normalization D^-1/2 (A + I) D^-1/2 with D_ii = rowsum(A + I)."""
    if a.rows != a.cols:
        raise ShapeError(f"adjacency must be square, got {a.shape}")
    n = a.rows
    r, c, v = a.triplets()
    diag = np.arange(n, dtype=np.int64)
    r = np.concatenate([r, diag])
    c = np.concatenate([c, diag])
    v = np.concatenate([v.astype(np.float64), np.ones(n)])
    order = np.lexsort((c, r))
    r, c, v = r[order], c[order], v[order]
    new = np.ones(r.size, dtype=bool)
    new[1:] = (r[1:] != r[:-1]) | (c[1:] != c[:-1])
    heads = np.flatnonzero(new)
    v = np.add.reduceat(v, heads)
    r, c = r[heads], c[heads]
    deg = np.bincount(r, weights=v, minlength=n)
    inv_sqrt = 1.0 / np.sqrt(deg)
    return CsrMatrix.from_coo(r, c, v * inv_sqrt[r] * inv_sqrt[c], (n, n))


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, np.float32(0))


def softmax(x: np.ndarray) -> np.ndarray:
    z = x - x.max(axis=1, keepdims=True)
    e = np.exp(z)
    return (e / e.sum(axis=1, keepdims=True)).astype(np.float32)


# file formats -----------------------------------------------------------------


def read_matrix_market(path) -> CsrMatrix:
    """Load a coordinate Matrix Market file; pattern files become all-ones."""
    m = scipy.io.mmread(str(path))
    if not scipy.sparse.issparse(m):
        m = scipy.sparse.coo_matrix(m)
    return CsrMatrix.from_scipy(m)


def write_matrix_market(path, a: CsrMatrix) -> None:
    coo = scipy.sparse.coo_matrix((a.vals.astype(np.float64), (a.row_indices(), a.col_idx)), shape=a.shape)
    scipy.io.mmwrite(str(path), coo, field="real", symmetry="general")


def write_dense(path, x) -> None:
    a = as_dense(x)
    with open(path, "wb") as fh:
        fh.write(_DENSE_HEADER.pack(DENSE_MAGIC, a.shape[0], a.shape[1], 0))
        fh.write(a.astype("<f4").tobytes())


def read_dense(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < _DENSE_HEADER.size:
        raise ValueError(f"{path}: truncated dense header")
    magic, rows, cols, _ = _DENSE_HEADER.unpack_from(raw)
    if magic != DENSE_MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    payload = raw[_DENSE_HEADER.size:]
    if len(payload) != 4 * rows * cols:
        raise ValueError(f"{path}: payload holds {len(payload)} bytes, expected {4 * rows * cols}")
    return as_dense(np.frombuffer(payload, dtype="<f4").reshape(rows, cols))
