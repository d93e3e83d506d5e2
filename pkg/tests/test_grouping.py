import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_csr
from oracles import group_rows_literal
from hetgcn.errors import ParameterError, ShapeError
from hetgcn.grouping import MovingAverage, RowGroups, build_grouped, group_rows, single_group, spmm_grouped
from hetgcn.matcore import CsrMatrix, density, spmm_rowwise


def test_moving_average():
    m = MovingAverage()
    assert [m.update(x) for x in (2, 4, 6)] == [2.0, 3.0, 4.0]
    m.reset()
    assert m.update(10) == 10.0


def test_group_rows_examples():
    g = group_rows([5, 5, 5, 5], 0.5)
    assert g.boundaries == ((0, 4),) and g.fixed_nnz == (5,)
    g = group_rows([4, 4, 4, 16, 16, 16], 0.5)
    assert g.boundaries == ((0, 3), (3, 6)) and g.fixed_nnz == (4, 16)
    assert len(group_rows([1, 50, 3, 99, 0, 7], 1e6)) == 1


def test_group_rows_errors():
    with pytest.raises(ParameterError):
        group_rows([1, 2], 0)
    with pytest.raises(ParameterError):
        group_rows([], 0.3)


def test_row_groups_must_be_contiguous():
    with pytest.raises(ValueError):
        RowGroups(((0, 2), (3, 4)), (1, 1))


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(0, 64), min_size=1, max_size=80), st.floats(0.01, 3.0))
def test_group_rows_matches_literal_loop(nnzs, tau):
    g = group_rows(nnzs, tau)
    assert list(g.boundaries) == group_rows_literal(nnzs, tau)
    assert g.rows == len(nnzs)
    assert all(f == max(nnzs[s:e]) for (s, e), f in zip(g.boundaries, g.fixed_nnz))
    assert np.all(g.row_fixed_nnz() >= np.asarray(nnzs))


def test_build_grouped_padding_arithmetic():
    a = CsrMatrix.from_dense([[1, 1, 1, 0, 0, 0, 0, 0],
                              [1, 1, 1, 1, 0, 0, 0, 0],
                              [0, 0, 0, 0, 0, 0, 1, 1]])
    g = build_grouped(a, single_group(a.row_nnz()))
    assert g.stored == 12
    assert g.padded_density() == 0.5
    # padding repeats the last real column with value 0
    assert g.col_idx[8:12].tolist() == [6, 7, 7, 7]
    assert g.vals[10:12].tolist() == [0.0, 0.0]


def test_build_grouped_uniform_rows_no_padding():
    a = CsrMatrix.from_dense(np.eye(8) + np.eye(8, k=1) + np.eye(8, k=-7))
    g = build_grouped(a, single_group(a.row_nnz()))
    assert g.padded_density() == density(a)
    assert not g.padding_mask().any()


def test_build_grouped_band_recount():
    n = 4096
    rng = np.random.default_rng(0)
    rows, cols = [], []
    for i in range(n):
        width = int(rng.integers(1, 12))
        for j in range(max(0, i - width), min(n, i + width)):
            rows.append(i)
            cols.append(j)
    a = CsrMatrix.from_coo(rows, cols, np.ones(len(rows)), (n, n))
    groups = group_rows(a.row_nnz(), 0.3)
    g = build_grouped(a, groups)
    recount = sum((e - s) * f for (s, e), f in zip(groups.boundaries, groups.fixed_nnz))
    assert g.stored == recount
    assert g.padded_density() == recount / (n * n)


def test_build_grouped_rejects_short_groups():
    a = CsrMatrix.from_dense([[1, 1], [1, 0]])
    with pytest.raises(ValueError):
        build_grouped(a, RowGroups(((0, 2),), (1,)))
    with pytest.raises(ShapeError):
        build_grouped(a, RowGroups(((0, 3),), (2,)))


def test_spmm_grouped_identity_and_empty_row():
    b = np.random.default_rng(1).standard_normal((8, 5)).astype(np.float32)
    eye = CsrMatrix.from_dense(np.eye(8))
    assert np.array_equal(spmm_grouped(build_grouped(eye, single_group(eye.row_nnz())), b), b)
    d = np.eye(8)
    d[3, 3] = 0
    a = CsrMatrix.from_dense(d)
    out = spmm_grouped(build_grouped(a, single_group(a.row_nnz())), b)
    assert np.all(out[3] == 0.0)


def test_spmm_grouped_matches_rowwise():
    rng = np.random.default_rng(2)
    a = random_csr(rng, 64, 64, 0.1)
    b = rng.standard_normal((64, 32)).astype(np.float32)
    g = build_grouped(a, group_rows(a.row_nnz(), 0.3))
    np.testing.assert_allclose(spmm_grouped(g, b), spmm_rowwise(a, b), atol=1e-4)


def test_grouped_save(tmp_path):
    a = random_csr(np.random.default_rng(3), 10, 10, 0.3)
    g = build_grouped(a, group_rows(a.row_nnz(), 0.3))
    g.save(tmp_path / "g")
    meta = json.loads((tmp_path / "g.json").read_text())
    assert meta["stored"] == g.stored
    assert (tmp_path / "g.bin").exists()
