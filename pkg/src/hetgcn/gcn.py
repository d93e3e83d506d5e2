"""Two-layer GCN inference, combination first: B = X @ W, then A_hat @ B.

The functional path computes the numbers through the planned split of
A_hat; the timed path additionally simulates each layer on the engine
array and reports the latency.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .costmodel import CostModel
from .errors import ShapeError
from .matcore import CsrMatrix, as_dense, dense_gemm, relu, softmax
from .pegen import PePlan, PlanParams, execute_plan_functional, generate_pe_plan
from .pipesim import (ArrayGeometry, LayerDims, build_task_graph, layer_latency, simulate,
                      utilization_report)
from .reorder import Permutation, apply_permutation, reorder_graph

FINAL_ACTIVATIONS = ("none", "relu", "softmax")


@dataclass
class GcnModel:
    w1: np.ndarray
    w2: np.ndarray

    def __post_init__(self):
        self.w1 = as_dense(self.w1)
        self.w2 = as_dense(self.w2)
        if self.w1.shape[1] != self.w2.shape[0]:
            raise ShapeError(f"W1 {self.w1.shape} and W2 {self.w2.shape} do not chain")

    @property
    def f_in(self) -> int:
        return self.w1.shape[0]

    @property
    def hidden(self) -> int:
        return self.w1.shape[1]

    @property
    def classes(self) -> int:
        return self.w2.shape[1]

    @classmethod
    def init(cls, f_in: int, classes: int, hidden: int = 128, seed: int = 42) -> "GcnModel":
        """Uniform(-0.05, 0.05) weights from a seeded generator."""
        rng = np.random.default_rng(seed)
        w1 = rng.uniform(-0.05, 0.05, size=(f_in, hidden)).astype(np.float32)
        w2 = rng.uniform(-0.05, 0.05, size=(hidden, classes)).astype(np.float32)
        return cls(w1, w2)


@dataclass
class InferenceResult:
    logits: np.ndarray | None
    layers: list[dict] = field(default_factory=list)
    stats: dict = field(default_factory=dict)

    @property
    def latency(self) -> float:
        return float(sum(layer["latency"] for layer in self.layers))


def _final(z: np.ndarray, final_activation: str) -> np.ndarray:
    if final_activation == "relu":
        return relu(z)
    if final_activation == "softmax":
        return softmax(z)
    return z


def flop_counts(n: int, nnz: int, f_in: int, hidden: int) -> dict:
    """First-layer flops for both evaluation orders."""
    return {
        "combination_first": 2 * n * f_in * hidden + 2 * nnz * hidden,
        "aggregation_first": 2 * nnz * f_in + 2 * n * f_in * hidden,
    }


def _check_shapes(a: CsrMatrix, x, model: GcnModel):
    if a.rows != a.cols:
        raise ShapeError(f"adjacency must be square, got {a.shape}")
    if x is not None and (x.shape[0] != a.rows or x.shape[1] != model.f_in):
        raise ShapeError(f"X {x.shape} does not match N={a.rows}, F_in={model.f_in}")


def infer_functional(a_norm: CsrMatrix, x, model: GcnModel, params: PlanParams | None = None,
                     perm: Permutation | None = None, plan: PePlan | None = None,
                     final_activation: str = "none") -> InferenceResult:
    """Logits of the two-layer model, rows in the caller's vertex order.

    With ``perm`` the graph and features are relabelled before planning and
    the logits are mapped back afterwards. A precomputed ``plan`` must
    belong to the (relabelled) adjacency.
    """
    if final_activation not in FINAL_ACTIVATIONS:
        raise ValueError(f"final activation must be one of {FINAL_ACTIVATIONS}")
    x = as_dense(x)
    _check_shapes(a_norm, x, model)
    if perm is not None:
        a_norm = apply_permutation(a_norm, perm)
        x = perm.permute_rows(x)
    if plan is None:
        plan = generate_pe_plan(a_norm, params)
    h1 = relu(execute_plan_functional(plan, dense_gemm(x, model.w1)))
    z = _final(execute_plan_functional(plan, dense_gemm(h1, model.w2)), final_activation)
    if perm is not None:
        z = perm.unpermute_rows(z)
    return InferenceResult(np.ascontiguousarray(z), stats={"plan": plan.summary()})


def infer_timed(a_norm: CsrMatrix, x, model: GcnModel, params: PlanParams | None = None,
                geom: ArrayGeometry | None = None, cost: CostModel | None = None,
                reorder: bool = False, seed: int = 0, parts: int = 1, policy: str = "pipelined",
                final_activation: str = "none", skip_functional: bool = False) -> InferenceResult:
    """Plan once, simulate both layers, and (unless skipped) compute the logits on the same plan."""
    geom = geom or ArrayGeometry()
    cost = cost or CostModel()
    if x is not None:
        x = as_dense(x)
    _check_shapes(a_norm, x, model)
    perm = reorder_graph(a_norm, parts=parts, seed=seed) if reorder else None
    a_run = apply_permutation(a_norm, perm) if perm is not None else a_norm
    plan = generate_pe_plan(a_run, params)
    n = a_norm.rows
    layers = []
    for dims, act in ((LayerDims(n, model.f_in, model.hidden), True),
                      (LayerDims(n, model.hidden, model.classes), final_activation != "none")):
        tg = build_task_graph(plan, dims, geom, cost, activation=act)
        trace = simulate(tg, geom, policy)
        layers.append({"dims": [dims.n, dims.f_in, dims.f_out], "tasks": tg.counts(),
                       "makespan": trace.makespan, "ddr_time": tg.ddr_time,
                       "latency": layer_latency(tg, trace), "utilization": utilization_report(trace),
                       "trace": trace})
    logits = None
    if not skip_functional:
        if x is None:
            raise ShapeError("features are required unless the functional pass is skipped")
        logits = infer_functional(a_norm, x, model, perm=perm, plan=plan,
                                  final_activation=final_activation).logits
    stats = {
        "plan": plan.summary(),
        "flops": flop_counts(n, a_norm.nnz, model.f_in, model.hidden),
        "reordered": reorder,
        "policy": policy,
        "latency": float(sum(layer["latency"] for layer in layers)),
    }
    return InferenceResult(logits, layers, stats)
