"""Community-locality vertex reordering and block-density diagnostics.

The built-in ordering is a stand-in for an offline METIS run: asynchronous
label propagation finds clusters, clusters are laid out contiguously
(largest first), and vertices inside a cluster are sorted by degree.
External orderings can be injected through a permutation JSON file.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse

from .errors import ParameterError, ShapeError, ValidationError
from .matcore import CsrMatrix

LABEL_PROPAGATION_SWEEPS = 10


@dataclass(frozen=True, eq=False)
class Permutation:
    """Bijection on [0, n). ``forward[old] = new`` and ``inverse[new] = old``."""

    forward: np.ndarray
    inverse: np.ndarray

    def __post_init__(self):
        fwd = np.asarray(self.forward, dtype=np.int64)
        inv = np.asarray(self.inverse, dtype=np.int64)
        n = fwd.size
        if inv.size != n or n == 0:
            raise ValidationError("forward and inverse must be non-empty and equally long")
        if fwd.min() < 0 or fwd.max() >= n or np.unique(fwd).size != n:
            raise ValidationError("forward map is not a bijection on [0, n)")
        if not np.array_equal(inv[fwd], np.arange(n)):
            raise ValidationError("inverse does not invert forward")
        object.__setattr__(self, "forward", fwd)
        object.__setattr__(self, "inverse", inv)

    @property
    def n(self) -> int:
        return int(self.forward.size)

    @classmethod
    def from_forward(cls, forward) -> "Permutation":
        fwd = np.asarray(forward, dtype=np.int64)
        if fwd.ndim != 1 or fwd.size == 0:
            raise ValidationError("permutation must be a non-empty 1-D array")
        if fwd.min() < 0 or fwd.max() >= fwd.size or np.unique(fwd).size != fwd.size:
            raise ValidationError("permutation is not a bijection on [0, n)")
        inv = np.empty_like(fwd)
        inv[fwd] = np.arange(fwd.size)
        return cls(fwd, inv)

    @classmethod
    def from_order(cls, order) -> "Permutation":
        """Build from a list of old indices in their new order (new -> old)."""
        inv = np.asarray(order, dtype=np.int64)
        fwd = np.empty_like(inv)
        fwd[inv] = np.arange(inv.size)
        return cls.from_forward(fwd)

    @classmethod
    def identity(cls, n: int) -> "Permutation":
        ident = np.arange(n, dtype=np.int64)
        return cls(ident, ident.copy())

    @classmethod
    def random(cls, n: int, seed: int) -> "Permutation":
        return cls.from_forward(np.random.default_rng(seed).permutation(n))

    def inverted(self) -> "Permutation":
        return Permutation(self.inverse, self.forward)

    def permute_rows(self, x: np.ndarray) -> np.ndarray:
        """Row ``forward[i]`` of the result is row ``i`` of ``x``."""
        return x[self.inverse]

    def unpermute_rows(self, x: np.ndarray) -> np.ndarray:
        return x[self.forward]

    def __eq__(self, other) -> bool:
        return isinstance(other, Permutation) and np.array_equal(self.forward, other.forward)

    __hash__ = None


def save_permutation(path, perm: Permutation) -> None:
    Path(path).write_text(json.dumps(perm.forward.tolist()))


def load_permutation(path) -> Permutation:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(data, list) or not all(isinstance(x, int) for x in data):
        raise ValidationError(f"{path}: expected a JSON array of integers")
    return Permutation.from_forward(data)


@dataclass(frozen=True)
class BlockProfile:
    block_size: int
    diag_densities: tuple[float, ...]
    offdiag_density: float

    @property
    def mean_diag_density(self) -> float:
        return float(np.mean(self.diag_densities))

    def to_dict(self) -> dict:
        return {
            "block_size": self.block_size,
            "diag_densities": list(self.diag_densities),
            "mean_diag_density": self.mean_diag_density,
            "offdiag_density": self.offdiag_density,
        }


# graph generation -------------------------------------------------------------


def _community_bounds(n: int, k: int) -> np.ndarray:
    size = n // k
    bounds = np.arange(k + 1, dtype=np.int64) * size
    bounds[-1] = n
    return bounds


def _sample_upper_pairs(rng, s: int, p: float) -> tuple[np.ndarray, np.ndarray]:
    """Each of the s(s-1)/2 pairs i<j of a block, kept independently with prob p."""
    total = s * (s - 1) // 2
    if total == 0 or p == 0:
        return np.zeros(0, np.int64), np.zeros(0, np.int64)
    count = int(rng.binomial(total, p))
    picks = np.sort(rng.choice(total, size=count, replace=False))
    i_arr = np.arange(s, dtype=np.int64)
    offsets = i_arr * (2 * s - i_arr - 1) // 2
    i = np.searchsorted(offsets, picks, side="right") - 1
    j = picks - offsets[i] + i + 1
    return i, j


def _sample_cross_pairs(rng, n: int, labels: np.ndarray, p: float) -> tuple[np.ndarray, np.ndarray]:
    """Each unordered pair with different community labels, kept with prob p."""
    sizes = np.bincount(labels)
    total = (n * n - int(np.sum(sizes.astype(np.int64) ** 2))) // 2
    if total == 0 or p == 0:
        return np.zeros(0, np.int64), np.zeros(0, np.int64)
    count = int(rng.binomial(total, p))
    if count > total // 2:
        # dense regime: enumerate explicitly
        i, j = np.triu_indices(n, k=1)
        cross = labels[i] != labels[j]
        i, j = i[cross], j[cross]
        picks = np.sort(rng.choice(i.size, size=count, replace=False))
        return i[picks].astype(np.int64), j[picks].astype(np.int64)
    keys = np.zeros(0, dtype=np.int64)
    while keys.size < count:
        need = count - keys.size
        a = rng.integers(0, n, size=2 * need + 16)
        b = rng.integers(0, n, size=2 * need + 16)
        lo, hi = np.minimum(a, b), np.maximum(a, b)
        ok = (lo != hi) & (labels[lo] != labels[hi])
        cand = np.concatenate([keys, lo[ok] * n + hi[ok]])
        _, first = np.unique(cand, return_index=True)
        keys = cand[np.sort(first)]
    keys = np.sort(keys[:count])
    return keys // n, keys % n


def gen_sbm(n: int, k: int, p_in: float, p_out: float, seed: int) -> CsrMatrix:
    """Symmetric, unweighted stochastic block model graph without self-loops.

    Communities are contiguous index ranges of size ``n // k``; the last one
    absorbs the remainder. Every intra-community pair is an edge with
    probability ``p_in`` and every inter-community pair with ``p_out``.
    """
    if not (0.0 <= p_out <= p_in <= 1.0):
        raise ParameterError(f"need 0 <= p_out <= p_in <= 1, got p_in={p_in}, p_out={p_out}")
    if not (1 <= k <= n):
        raise ParameterError(f"need 1 <= k <= n, got k={k}, n={n}")
    rng = np.random.default_rng(seed)
    bounds = _community_bounds(n, k)
    labels = np.repeat(np.arange(k), np.diff(bounds))
    rows, cols = [], []
    for c in range(k):
        i, j = _sample_upper_pairs(rng, int(bounds[c + 1] - bounds[c]), p_in)
        rows.append(i + bounds[c])
        cols.append(j + bounds[c])
    i, j = _sample_cross_pairs(rng, n, labels, p_out)
    rows.append(i)
    cols.append(j)
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    return CsrMatrix.from_coo(np.concatenate([r, c]), np.concatenate([c, r]),
                              np.ones(2 * r.size, np.float32), (n, n))


def sbm_labels(n: int, k: int) -> np.ndarray:
    """Ground-truth community of each vertex for :func:`gen_sbm`."""
    return np.repeat(np.arange(k), np.diff(_community_bounds(n, k)))


# reordering -------------------------------------------------------------------


def shared_neighbor_weights(a: CsrMatrix) -> scipy.sparse.csr_matrix:
    """Edge weights 1 + |N(u) & N(v)| on the pattern of ``a`` (self-loops removed)."""
    s = a.to_scipy().copy()
    s.data[:] = 1.0
    s.setdiag(0)
    s.eliminate_zeros()
    w = (s @ s).multiply(s) + s
    w = scipy.sparse.csr_matrix(w)
    w.sort_indices()
    return w


def label_propagation(a: CsrMatrix, seed: int, sweeps: int = LABEL_PROPAGATION_SWEEPS) -> np.ndarray:
    """Asynchronous label propagation; returns one cluster label per vertex.

    Vertices are visited in a seeded random order that is fixed across
    sweeps. A vertex adopts the label with the largest vote among its
    neighbours, where each neighbour votes with weight 1 + (number of
    shared neighbours). Ties go to the lowest label.
    """
    n = a.rows
    w = shared_neighbor_weights(a)
    labels = list(range(n))
    row_ptr = w.indptr.tolist()
    col_idx = w.indices.tolist()
    weight = w.data.tolist()
    order = np.random.default_rng(seed).permutation(n).tolist()
    for _ in range(sweeps):
        changed = 0
        for v in order:
            votes: dict[int, float] = {}
            for t in range(row_ptr[v], row_ptr[v + 1]):
                lab = labels[col_idx[t]]
                votes[lab] = votes.get(lab, 0.0) + weight[t]
            if not votes:
                continue
            top = max(votes.values())
            best = min(lab for lab, vote in votes.items() if vote == top)
            if best != labels[v]:
                labels[v] = best
                changed += 1
        if changed == 0:
            break
    return np.asarray(labels, dtype=np.int64)


def reorder_graph(a: CsrMatrix, parts: int = 1, seed: int = 0) -> Permutation:
    """Permutation that places each discovered cluster contiguously.

    Clusters are packed into ``parts`` bins (largest cluster first, into the
    currently lightest bin) and bins are laid out in order. Within a bin,
    clusters appear in decreasing size; within a cluster, vertices are
    sorted by degree (descending, ties by lower id).
    """
    if parts < 1:
        raise ParameterError(f"parts must be >= 1, got {parts}")
    if a.rows != a.cols:
        raise ShapeError(f"adjacency must be square, got {a.shape}")
    labels = label_propagation(a, seed)
    degree = a.row_nnz()
    uniq, first_seen, sizes = np.unique(labels, return_index=True, return_counts=True)
    # decreasing size, ties by the lowest member id
    cluster_order = np.lexsort((first_seen, -sizes))
    bins: list[list[int]] = [[] for _ in range(parts)]
    load = [0] * parts
    for ci in cluster_order:
        target = min(range(parts), key=lambda b: (load[b], b))
        bins[target].append(int(ci))
        load[target] += int(sizes[ci])
    members: dict[int, np.ndarray] = {}
    by_label = np.argsort(labels, kind="stable")
    starts = np.concatenate([[0], np.cumsum(sizes)])
    for ci in range(uniq.size):
        verts = by_label[starts[ci]:starts[ci + 1]]
        members[ci] = verts[np.lexsort((verts, -degree[verts]))]
    order = [members[ci] for b in bins for ci in b]
    return Permutation.from_order(np.concatenate(order))


def apply_permutation(a: CsrMatrix, p: Permutation) -> CsrMatrix:
    """Return P A P^T: entry (i, j) moves to (forward[i], forward[j])."""
    if not (p.n == a.rows == a.cols):
        raise ShapeError(f"permutation of size {p.n} does not fit matrix {a.shape}")
    r, c, v = a.triplets()
    return CsrMatrix.from_coo(p.forward[r], p.forward[c], v, a.shape)


def block_density_profile(a: CsrMatrix, block_size: int) -> BlockProfile:
    """Densities of the diagonal ``block_size`` blocks and of everything else.

    Stored self-loops are counted like any other entry.
    """
    if block_size < 1:
        raise ParameterError(f"block_size must be >= 1, got {block_size}")
    n = a.rows
    nblocks = math.ceil(n / block_size)
    r, c, _ = a.triplets()
    rb, cb = r // block_size, c // block_size
    on_diag = rb == cb
    diag_nnz = np.bincount(rb[on_diag], minlength=nblocks)
    heights = np.minimum(block_size, n - np.arange(nblocks) * block_size)
    diag = diag_nnz / (heights.astype(np.float64) ** 2)
    off_cells = a.rows * a.cols - int(np.sum(heights.astype(np.int64) ** 2))
    off_nnz = int(np.count_nonzero(~on_diag))
    offdiag = off_nnz / off_cells if off_cells else 0.0
    return BlockProfile(block_size, tuple(float(x) for x in diag), float(offdiag))
