"""Tile-row planning: split a sparse adjacency across dense engines, sparse
engines and the PL SpMM unit.

The matrix is cut into ``tile_size`` x ``tile_size`` tiles. For each
tile-row, every in-tile row gets an nnz budget that all tiles of that row
share; entries over budget are moved to the residual (PL) matrix, the
budgeted rows are grouped with the moving-average rule, and the padded
density of the result selects the engine kind.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import ParameterError, ShapeError
from .grouping import RowGroups, build_grouped, group_rows, spmm_grouped
from .matcore import CsrMatrix, as_dense, dense_gemm, spmm_rowwise


class PeKind(str, Enum):
    DENSE = "dense"
    SPARSE = "sparse"
    EMPTY = "empty"
    OFFLOAD = "offload"  # whole tile-row below the PL cutoff, computed on PL


@dataclass(frozen=True)
class PlanParams:
    tile_size: int = 64
    delta: float = 2.0
    p: float = 0.9
    d: float = 0.5
    tau: float = 0.3
    pl_cutoff: float = 0.01
    residual_rule: str = "magnitude"  # or "first-k"
    # move whole tiles below pl_cutoff density to PL before budgeting
    tile_demotion: bool = True

    def __post_init__(self):
        if self.tile_size < 1:
            raise ParameterError(f"tile_size must be >= 1, got {self.tile_size}")
        if self.delta < 1:
            raise ParameterError(f"delta must be >= 1, got {self.delta}")
        if not 0 < self.p <= 1:
            raise ParameterError(f"p must be in (0, 1], got {self.p}")
        if not 0 <= self.pl_cutoff <= self.d <= 1:
            raise ParameterError(f"need 0 <= pl_cutoff <= d <= 1, got {self.pl_cutoff}, {self.d}")
        if not self.tau > 0:
            raise ParameterError(f"tau must be > 0, got {self.tau}")
        if self.residual_rule not in ("magnitude", "first-k"):
            raise ParameterError(f"unknown residual rule {self.residual_rule!r}")


def find_nnz(nnzs_row, p: float) -> int:
    """Smallest v such that a fraction >= p of the tiles hold at most v nonzeros."""
    if not 0 < p <= 1:
        raise ParameterError(f"p must be in (0, 1], got {p}")
    counts = np.sort(np.asarray(nnzs_row, dtype=np.int64))
    if counts.size == 0:
        raise ParameterError("nnzs_row must be non-empty")
    return int(counts[_coverage_index(counts.size, p)])


def _coverage_index(n_tiles: int, p: float) -> int:
    # smallest k with k / n_tiles >= p, as a 0-based index into the sorted counts
    k = math.ceil(p * n_tiles - 1e-9)
    return min(max(k, 1), n_tiles) - 1


@dataclass(frozen=True)
class TileRowStats:
    tile_row: int
    per_row_tile_nnz: np.ndarray  # (rows in tile-row) x tiles_col
    ave_nnz: np.ndarray
    max_nnz: np.ndarray
    active: np.ndarray  # tiles with at least one entry


@dataclass
class PeAssignment:
    tile_row: int
    row_start: int
    row_end: int
    kind: PeKind
    nnz_budget: list[int]
    padded_density: float
    groups: RowGroups | None = None
    active_tiles: list[int] = field(default_factory=list)
    engine_nnz: int = 0
    residual_nnz: int = 0

    @property
    def height(self) -> int:
        return self.row_end - self.row_start

    @property
    def padded_per_tile(self) -> int:
        """Stored entries (real + padding) in each active tile."""
        return self.groups.padded_entries() if self.groups is not None else 0

    def to_dict(self) -> dict:
        return {
            "tile_row": self.tile_row,
            "rows": [self.row_start, self.row_end],
            "kind": self.kind.value,
            "budgets": list(self.nnz_budget),
            "padded_density": self.padded_density,
            "groups": self.groups.to_list() if self.groups is not None else None,
            "active_tiles": list(self.active_tiles),
            "engine_nnz": self.engine_nnz,
            "residual_nnz": self.residual_nnz,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PeAssignment":
        groups = None
        if data.get("groups"):
            g = data["groups"]
            groups = RowGroups(tuple((x["start"], x["end"]) for x in g), tuple(x["fixed_nnz"] for x in g))
        return cls(data["tile_row"], data["rows"][0], data["rows"][1], PeKind(data["kind"]),
                   list(data["budgets"]), data["padded_density"], groups, list(data["active_tiles"]),
                   data["engine_nnz"], data["residual_nnz"])


@dataclass
class PePlan:
    rows: int
    cols: int
    params: PlanParams
    assignments: list[PeAssignment]
    engine: CsrMatrix  # entries computed on the AIE array
    residual: CsrMatrix  # entries computed on PL

    @property
    def tile_size(self) -> int:
        return self.params.tile_size

    @property
    def tiles_col(self) -> int:
        return math.ceil(self.cols / self.tile_size)

    def kind_counts(self) -> dict[str, int]:
        out = {k.value: 0 for k in PeKind}
        for a in self.assignments:
            out[a.kind.value] += 1
        return out

    def summary(self) -> dict:
        counts = self.kind_counts()
        engine_rows = counts["dense"] + counts["sparse"]
        total = self.engine.nnz + self.residual.nnz
        dense_pes = sum(len(a.active_tiles) for a in self.assignments if a.kind is PeKind.DENSE)
        sparse_pes = sum(len(a.active_tiles) for a in self.assignments if a.kind is PeKind.SPARSE)
        return {
            "tile_rows": len(self.assignments),
            "kinds": counts,
            "sparse_tile_row_fraction": counts["sparse"] / engine_rows if engine_rows else 0.0,
            "sparse_pe_fraction": sparse_pes / (sparse_pes + dense_pes) if sparse_pes + dense_pes else 0.0,
            "engine_nnz": self.engine.nnz,
            "residual_nnz": self.residual.nnz,
            "residual_share": self.residual.nnz / total if total else 0.0,
        }

    def tile_csr(self, tile_row: int, tile_col: int) -> CsrMatrix:
        """Engine content of one tile, in tile-local coordinates."""
        a = self.assignments[tile_row]
        t = self.tile_size
        lo, hi = tile_col * t, min(self.cols, (tile_col + 1) * t)
        strip = self.engine.slice_rows(a.row_start, a.row_end)
        r, c, v = strip.triplets()
        keep = (c >= lo) & (c < hi)
        return CsrMatrix.from_coo(r[keep], c[keep] - lo, v[keep], (a.height, hi - lo))

    def grouped_tiles(self, tile_row: int) -> dict:
        """Padded fixed-nnz operand of every active tile of a sparse tile-row."""
        a = self.assignments[tile_row]
        if a.kind is not PeKind.SPARSE:
            raise ValueError(f"tile-row {tile_row} is {a.kind.value}, not sparse")
        return {c: build_grouped(self.tile_csr(tile_row, c), a.groups) for c in a.active_tiles}

    def to_dict(self) -> dict:
        return {
            "shape": [self.rows, self.cols],
            "params": asdict(self.params),
            "summary": self.summary(),
            "assignments": [a.to_dict() for a in self.assignments],
        }

    def save(self, path) -> Path:
        """Write the plan JSON and a ``.npz`` sidecar with the engine and residual CSR."""
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2))
        sidecar = path.with_suffix(".npz")
        np.savez(sidecar, **_csr_arrays("engine", self.engine), **_csr_arrays("residual", self.residual))
        return sidecar


def _csr_arrays(prefix: str, m: CsrMatrix) -> dict:
    return {f"{prefix}_shape": np.array(m.shape), f"{prefix}_row_ptr": m.row_ptr,
            f"{prefix}_col_idx": m.col_idx, f"{prefix}_vals": m.vals}


def _csr_from_arrays(prefix: str, z) -> CsrMatrix:
    rows, cols = (int(x) for x in z[f"{prefix}_shape"])
    return CsrMatrix(rows, cols, z[f"{prefix}_row_ptr"], z[f"{prefix}_col_idx"], z[f"{prefix}_vals"])


def load_plan(path) -> PePlan:
    path = Path(path)
    data = json.loads(path.read_text())
    with np.load(path.with_suffix(".npz")) as z:
        engine = _csr_from_arrays("engine", z)
        residual = _csr_from_arrays("residual", z)
    rows, cols = data["shape"]
    return PePlan(rows, cols, PlanParams(**data["params"]),
                  [PeAssignment.from_dict(a) for a in data["assignments"]], engine, residual)


# planning ---------------------------------------------------------------------


def tile_row_stats(strip: CsrMatrix, tile_row: int, tile_size: int) -> TileRowStats:
    """Per (row, tile) counts; average and maximum run over the tiles holding any entry."""
    tiles_col = math.ceil(strip.cols / tile_size)
    r = strip.row_indices()
    tc = strip.col_idx // tile_size
    counts = np.bincount(r * tiles_col + tc, minlength=strip.rows * tiles_col).reshape(strip.rows, tiles_col)
    active = counts.sum(axis=0) > 0
    used = counts[:, active] if active.any() else counts
    return TileRowStats(tile_row, counts, used.mean(axis=1), used.max(axis=1), active)


def row_budgets(stats: TileRowStats, delta: float, p: float) -> np.ndarray:
    """Per in-tile-row nnz budget shared by every active tile of the tile-row."""
    counts = stats.per_row_tile_nnz[:, stats.active] if stats.active.any() else stats.per_row_tile_nnz
    budget = stats.max_nnz.astype(np.int64).copy()
    nonzero = stats.ave_nnz > 0
    skewed = np.zeros_like(nonzero)
    skewed[nonzero] = stats.max_nnz[nonzero] / stats.ave_nnz[nonzero] >= delta
    if np.any(skewed):
        k = _coverage_index(counts.shape[1], p)
        budget[skewed] = np.sort(counts[skewed], axis=1)[:, k]
    budget[~nonzero] = 0
    return budget


def _scattered_entries(strip: CsrMatrix, tile_size: int, cutoff: float) -> np.ndarray:
    """Entries lying in tiles whose own density is below ``cutoff``."""
    tc = strip.col_idx // tile_size
    n_tiles = math.ceil(strip.cols / tile_size)
    widths = np.minimum(tile_size, strip.cols - np.arange(n_tiles) * tile_size)
    tile_nnz = np.bincount(tc, minlength=n_tiles)
    sparse_tiles = tile_nnz < cutoff * strip.rows * widths
    return sparse_tiles[tc]


def _keep_mask(strip: CsrMatrix, tile_size: int, budget: np.ndarray, rule: str) -> np.ndarray:
    """Which entries stay on the engine: at most budget[row] per (row, tile)."""
    r = strip.row_indices()
    c = strip.col_idx
    tc = c // tile_size
    if rule == "magnitude":
        order = np.lexsort((c, -np.abs(strip.vals.astype(np.float64)), tc, r))
    else:
        order = np.lexsort((c, tc, r))
    key = (r * (strip.cols // tile_size + 1) + tc)[order]
    new = np.ones(key.size, dtype=bool)
    new[1:] = key[1:] != key[:-1]
    group_start = np.maximum.accumulate(np.where(new, np.arange(key.size), 0))
    rank = np.arange(key.size) - group_start
    keep = np.zeros(key.size, dtype=bool)
    keep[order] = rank < budget[r[order]]
    return keep


def generate_pe_plan(a: CsrMatrix, params: PlanParams | None = None, **overrides) -> PePlan:
    """Assign every tile-row of ``a`` to dense engines, sparse engines or PL.

    A tile-row is dense when its padded density reaches ``d`` (and then keeps
    all of its entries on the engine), sparse when it lies in
    [``pl_cutoff``, ``d``), and offloaded to PL entirely below ``pl_cutoff``.
    """
    params = params or PlanParams()
    if overrides:
        params = PlanParams(**{**asdict(params), **overrides})
    t = params.tile_size
    n_tile_rows = math.ceil(a.rows / t)
    assignments = []
    engine_parts: list[tuple[np.ndarray, np.ndarray, np.ndarray]] = []
    residual_parts: list[tuple[np.ndarray, np.ndarray, np.ndarray]] = []
    for i in range(n_tile_rows):
        lo, hi = i * t, min(a.rows, (i + 1) * t)
        strip = a.slice_rows(lo, hi)
        r, c, v = strip.triplets()
        if strip.nnz == 0:
            assignments.append(PeAssignment(i, lo, hi, PeKind.EMPTY, [0] * (hi - lo), 0.0))
            continue
        scattered = np.zeros(strip.nnz, dtype=bool)
        if params.tile_demotion:
            scattered = _scattered_entries(strip, t, params.pl_cutoff)
            if scattered.any():
                residual_parts.append((r[scattered] + lo, c[scattered], v[scattered]))
                strip = CsrMatrix.from_coo(r[~scattered], c[~scattered], v[~scattered], strip.shape)
                r, c, v = strip.triplets()
        if strip.nnz == 0:
            assignments.append(PeAssignment(i, lo, hi, PeKind.OFFLOAD, [0] * (hi - lo), 0.0,
                                            residual_nnz=int(scattered.sum())))
            continue
        stats = tile_row_stats(strip, i, t)
        budget = row_budgets(stats, params.delta, params.p)
        groups = group_rows(budget, params.tau)
        padded = groups.padded_entries() / ((hi - lo) * t)
        if padded >= params.d:
            kind, keep = PeKind.DENSE, np.ones(strip.nnz, dtype=bool)
        elif padded >= params.pl_cutoff and padded > 0:
            kind, keep = PeKind.SPARSE, _keep_mask(strip, t, budget, params.residual_rule)
        else:
            kind, keep = PeKind.OFFLOAD, np.zeros(strip.nnz, dtype=bool)
        active = sorted(set((c[keep] // t).tolist()))
        engine_parts.append((r[keep] + lo, c[keep], v[keep]))
        residual_parts.append((r[~keep] + lo, c[~keep], v[~keep]))
        assignments.append(PeAssignment(
            i, lo, hi, kind, budget.tolist(), float(padded),
            groups if kind is not PeKind.OFFLOAD else None,
            active if kind is not PeKind.OFFLOAD else [],
            int(keep.sum()), int((~keep).sum() + scattered.sum())))
    engine = _assemble(engine_parts, a.shape)
    residual = _assemble(residual_parts, a.shape)
    return PePlan(a.rows, a.cols, params, assignments, engine, residual)


def _assemble(parts, shape) -> CsrMatrix:
    if not parts:
        return CsrMatrix.empty(*shape)
    r = np.concatenate([p[0] for p in parts])
    c = np.concatenate([p[1] for p in parts])
    v = np.concatenate([p[2] for p in parts])
    return CsrMatrix.from_coo(r, c, v, shape)


def split_is_lossless(plan: PePlan, a: CsrMatrix) -> bool:
    """Engine entries and residual entries are disjoint and together rebuild ``a`` bit-exactly."""
    if plan.engine.shape != a.shape or plan.residual.shape != a.shape:
        return False
    er, ec, ev = plan.engine.triplets()
    rr, rc, rv = plan.residual.triplets()
    keys = np.concatenate([er * a.cols + ec, rr * a.cols + rc])
    if np.unique(keys).size != keys.size:
        return False
    vals = np.concatenate([ev, rv])
    order = np.argsort(keys, kind="stable")
    ar, ac, av = a.triplets()
    return (np.array_equal(keys[order], ar * a.cols + ac)
            and np.array_equal(vals[order].view(np.uint32), av.view(np.uint32)))


def execute_plan_functional(plan: PePlan, b) -> np.ndarray:
    """Compute A @ B through the split: engine tiles plus PL residual."""
    b = as_dense(b)
    if plan.cols != b.shape[0]:
        raise ShapeError(f"plan has {plan.cols} columns, B has {b.shape[0]} rows")
    t = plan.tile_size
    out = np.zeros((plan.rows, b.shape[1]), dtype=np.float32)
    for a in plan.assignments:
        if a.kind is PeKind.DENSE:
            for c in a.active_tiles:
                tile = plan.tile_csr(a.tile_row, c).to_dense()
                out[a.row_start:a.row_end] += dense_gemm(tile, b[c * t:c * t + tile.shape[1]])
        elif a.kind is PeKind.SPARSE:
            for c, g in plan.grouped_tiles(a.tile_row).items():
                out[a.row_start:a.row_end] += spmm_grouped(g, b[c * t:c * t + g.cols])
    if plan.residual.nnz:
        out += spmm_rowwise(plan.residual, b)
    return out
