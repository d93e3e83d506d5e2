"""Mapping compiler, functional model and pipeline simulator for a
heterogeneous GCN accelerator (dense engines, sparse engines and a PL SpMM unit)."""

from .costmodel import CostModel
from .gcn import GcnModel, infer_functional, infer_timed
from .grouping import GroupedCsr, RowGroups, build_grouped, group_rows, spmm_grouped
from .matcore import CsrMatrix, dense_gemm, normalize_adjacency, spmm_rowwise
from .pegen import PeKind, PePlan, PlanParams, execute_plan_functional, find_nnz, generate_pe_plan
from .pipesim import ArrayGeometry, LayerDims, build_task_graph, simulate, utilization_report
from .reorder import Permutation, apply_permutation, gen_sbm, reorder_graph

__version__ = "0.1.0"
