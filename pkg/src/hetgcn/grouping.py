"""Moving-average row grouping and the padded fixed-nnz sparse format.

Rows of a sparse operand are split into contiguous groups; every row in a
group is padded to the group's largest row length, so the inner loop of the
SpMM kernel has a constant trip count per group.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ParameterError, ShapeError
from .matcore import CsrMatrix, as_dense, write_dense


class MovingAverage:
    """Cumulative mean of the samples seen since the last reset."""

    def __init__(self):
        self.count = 0
        self.mean = 0.0

    def update(self, x: float) -> float:
        self.count += 1
        self.mean += (x - self.mean) / self.count
        return self.mean

    def reset(self) -> None:
        self.count = 0
        self.mean = 0.0


@dataclass(frozen=True)
class RowGroups:
    boundaries: tuple[tuple[int, int], ...]
    fixed_nnz: tuple[int, ...]

    def __post_init__(self):
        if len(self.boundaries) != len(self.fixed_nnz):
            raise ValueError("one fixed_nnz entry per group is required")
        expect = 0
        for start, end in self.boundaries:
            if start != expect or end <= start:
                raise ValueError(f"groups must tile the rows contiguously, got {self.boundaries}")
            expect = end

    @property
    def rows(self) -> int:
        return self.boundaries[-1][1] if self.boundaries else 0

    def __len__(self) -> int:
        return len(self.boundaries)

    def sizes(self) -> np.ndarray:
        return np.array([end - start for start, end in self.boundaries], dtype=np.int64)

    def row_fixed_nnz(self) -> np.ndarray:
        """Padded entry count of every row."""
        return np.repeat(np.asarray(self.fixed_nnz, dtype=np.int64), self.sizes())

    def padded_entries(self) -> int:
        return int(np.dot(self.sizes(), np.asarray(self.fixed_nnz, dtype=np.int64)))

    def to_list(self) -> list[dict]:
        return [{"start": s, "end": e, "fixed_nnz": f} for (s, e), f in zip(self.boundaries, self.fixed_nnz)]


def group_rows(nnzs_rows, tau: float) -> RowGroups:
    """Split rows into contiguous groups by watching the moving average.

    A group closes when the relative change of the running mean reaches
    ``tau``; the row that caused the jump starts the next group and seeds
    the fresh average. Right after a reset the current-average register
    reads zero, so the following row is compared against itself.
    """
    if not tau > 0:
        raise ParameterError(f"tau must be > 0, got {tau}")
    nnzs = [int(x) for x in nnzs_rows]
    if not nnzs:
        raise ParameterError("nnzs_rows must be non-empty")
    avg = MovingAverage()
    cur_ave = 0.0
    bounds: list[tuple[int, int]] = []
    start = 0
    for i, nnz in enumerate(nnzs):
        pre_ave = cur_ave
        cur_ave = avg.update(nnz)
        if pre_ave == 0:
            pre_ave = cur_ave
        if pre_ave != 0 and abs(cur_ave - pre_ave) / pre_ave >= tau:
            bounds.append((start, i))
            start = i
            avg.reset()
            avg.update(nnz)
            cur_ave = 0.0
    bounds.append((start, len(nnzs)))
    fixed = tuple(max(nnzs[s:e]) for s, e in bounds)
    return RowGroups(tuple(bounds), fixed)


def single_group(nnzs_rows) -> RowGroups:
    nnzs = np.asarray(nnzs_rows, dtype=np.int64)
    return RowGroups(((0, int(nnzs.size)),), (int(nnzs.max()),))


@dataclass(frozen=True, eq=False)
class GroupedCsr:
    rows: int
    cols: int
    groups: RowGroups
    row_ptr: np.ndarray
    col_idx: np.ndarray
    vals: np.ndarray

    @property
    def stored(self) -> int:
        return int(self.col_idx.size)

    def padded_density(self) -> float:
        return self.stored / (self.rows * self.cols)

    def padding_mask(self) -> np.ndarray:
        return self.vals == 0

    def to_dict(self) -> dict:
        return {"rows": self.rows, "cols": self.cols, "stored": self.stored,
                "padded_density": self.padded_density(), "groups": self.groups.to_list()}

    def save(self, stem) -> None:
        """Debug dump: ``<stem>.json`` group table plus ``<stem>.bin`` (col, val) payload."""
        stem = Path(stem)
        stem.with_suffix(".json").write_text(json.dumps(self.to_dict(), indent=2))
        payload = np.stack([self.col_idx.astype(np.float32), self.vals]) if self.stored else np.zeros((2, 1), np.float32)
        write_dense(stem.with_suffix(".bin"), payload)


def build_grouped(a: CsrMatrix, groups: RowGroups) -> GroupedCsr:
    """Pad every row of ``a`` to its group's fixed entry count.

    Padding entries carry value 0.0 and repeat the row's last real column
    (column 0 for an empty row).
    """
    if groups.rows != a.rows:
        raise ShapeError(f"groups cover {groups.rows} rows, matrix has {a.rows}")
    row_nnz = a.row_nnz()
    fixed = groups.row_fixed_nnz()
    if np.any(row_nnz > fixed):
        bad = int(np.flatnonzero(row_nnz > fixed)[0])
        raise ValueError(f"row {bad} holds {row_nnz[bad]} entries, group allows {fixed[bad]}")
    row_ptr = np.zeros(a.rows + 1, dtype=np.int64)
    np.cumsum(fixed, out=row_ptr[1:])
    last_col = np.zeros(a.rows, dtype=np.int64)
    has = row_nnz > 0
    last_col[has] = a.col_idx[a.row_ptr[1:][has] - 1]
    col_idx = np.repeat(last_col, fixed)
    vals = np.zeros(int(row_ptr[-1]), dtype=np.float32)
    rows = a.row_indices()
    within = np.arange(a.nnz, dtype=np.int64) - a.row_ptr[rows]
    dest = row_ptr[rows] + within
    col_idx[dest] = a.col_idx
    vals[dest] = a.vals
    return GroupedCsr(a.rows, a.cols, groups, row_ptr, col_idx, vals)


def spmm_grouped(g: GroupedCsr, b) -> np.ndarray:
    """SpMM over the padded format with a fixed inner trip count per group."""
    b = as_dense(b)
    if g.cols != b.shape[0]:
        raise ShapeError(f"inner dimensions differ: {(g.rows, g.cols)} @ {b.shape}")
    out = np.zeros((g.rows, b.shape[1]), dtype=np.float32)
    for (start, end), fixed in zip(g.groups.boundaries, g.groups.fixed_nnz):
        base = g.row_ptr[start:end]
        for t in range(fixed):
            idx = base + t
            out[start:end] += g.vals[idx, None] * b[g.col_idx[idx]]
    return out
