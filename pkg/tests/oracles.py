"""Independent reference implementations used as test oracles.

Deliberately naive: scalar loops and plain Python, written without reusing
any package code path.
"""

import math

import numpy as np


def triple_loop_gemm(a, b):
    """C[i, j] = sum over l in ascending order, accumulated in float32."""
    a = np.asarray(a, dtype=np.float32)
    b = np.asarray(b, dtype=np.float32)
    m, k = a.shape
    n = b.shape[1]
    out = np.zeros((m, n), dtype=np.float32)
    for i in range(m):
        for j in range(n):
            acc = np.float32(0.0)
            for l in range(k):
                acc = np.float32(acc + np.float32(a[i, l] * b[l, j]))
            out[i, j] = acc
    return out


def find_nnz_enumerate(counts, p):
    """Try every candidate value from 0 upward."""
    counts = list(counts)
    v = 0
    while True:
        covered = sum(1 for c in counts if c <= v)
        if covered / len(counts) >= p - 1e-12:
            return v
        v += 1


def group_rows_literal(nnzs, tau):
    """Line-by-line transcription of the moving-average grouping loop."""
    groups = []
    start = 0
    total, count = 0.0, 0
    cur_ave = 0.0
    for i, x in enumerate(nnzs):
        pre_ave = cur_ave
        total += x
        count += 1
        cur_ave = total / count
        if pre_ave == 0:
            pre_ave = cur_ave
        if pre_ave != 0 and abs(cur_ave - pre_ave) / pre_ave >= tau:
            groups.append((start, i))
            start = i
            total, count = float(x), 1
            cur_ave = 0.0
    groups.append((start, len(nnzs)))
    return groups


def tile_counts(dense, tile):
    """Recount nonzeros per (row, tile column) from a dense array."""
    rows, cols = dense.shape
    tiles = math.ceil(cols / tile)
    out = np.zeros((rows, tiles), dtype=np.int64)
    for i in range(rows):
        for t in range(tiles):
            out[i, t] = np.count_nonzero(dense[i, t * tile:(t + 1) * tile])
    return out


def normalize_dense(a):
    a = np.asarray(a, dtype=np.float64) + np.eye(a.shape[0])
    d = a.sum(axis=1)
    s = 1.0 / np.sqrt(d)
    return (s[:, None] * a * s[None, :]).astype(np.float32)
