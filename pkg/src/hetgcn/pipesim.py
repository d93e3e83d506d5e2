"""Discrete-event model of one GCN layer on the engine array and the PL SpMM unit.

The upper rows of the array compute B = X @ W in 32x32 output tiles; the
lower rows multiply each active A tile with a 32-column B slab as soon as
the B rows it reads exist, and the PL unit handles the residual one 32-column
slab at a time. After the last X @ W tile the upper rows are reconfigured
and join the A @ B pool.
"""

from __future__ import annotations

import csv
import heapq
import json
import math
from collections import deque
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .costmodel import Channel, CostModel
from .errors import ShapeError, ValidationError
from .pegen import PeKind, PePlan

XW, AB, PL, CFG = "xw", "ab", "pl", "cfg"
F32 = 4


@dataclass(frozen=True)
class ArrayGeometry:
    rows: int = 8
    cols: int = 50
    xw_rows: int = 4
    ab_rows: int = 4
    xw_tile: int = 32
    ab_tile: int = 64

    def __post_init__(self):
        if self.xw_rows + self.ab_rows != self.rows:
            raise ValueError("xw_rows + ab_rows must equal rows")
        if min(self.rows, self.cols, self.xw_rows, self.ab_rows, self.xw_tile, self.ab_tile) < 1:
            raise ValueError("geometry entries must be positive")

    @property
    def xw_engines(self) -> int:
        return self.xw_rows * self.cols

    @property
    def ab_engines(self) -> int:
        return self.ab_rows * self.cols


@dataclass(frozen=True)
class LayerDims:
    n: int
    f_in: int
    f_out: int


@dataclass
class Task:
    tid: int
    name: str
    cls: str
    duration: float
    deps: list[int] = field(default_factory=list)
    kind: str = ""


@dataclass
class TaskGraph:
    tasks: list[Task]
    xw_lanes: int
    ab_engines: int
    reconfig_engines: int
    ddr_time: float = 0.0

    def by_class(self, cls: str) -> list[Task]:
        return [t for t in self.tasks if t.cls == cls]

    def counts(self) -> dict[str, int]:
        out = {XW: 0, AB: 0, PL: 0, CFG: 0}
        for t in self.tasks:
            out[t.cls] += 1
        return out

    def total_work(self) -> float:
        return float(sum(t.duration for t in self.tasks))

    def topological_order(self) -> list[int]:
        """Kahn order; raises ValidationError on a cycle or a dangling dependency."""
        n = len(self.tasks)
        indeg = [0] * n
        users: list[list[int]] = [[] for _ in range(n)]
        for t in self.tasks:
            for d in t.deps:
                if not 0 <= d < n:
                    raise ValidationError(f"task {t.name} depends on unknown task {d}")
                indeg[t.tid] += 1
                users[d].append(t.tid)
        queue = deque(i for i in range(n) if indeg[i] == 0)
        order = []
        while queue:
            i = queue.popleft()
            order.append(i)
            for u in users[i]:
                indeg[u] -= 1
                if indeg[u] == 0:
                    queue.append(u)
        if len(order) != n:
            raise ValidationError("task graph has a cycle")
        return order


def _blocks(extent: int, size: int) -> list[int]:
    """Sizes of the blocks covering ``extent`` (last one ragged)."""
    return [min(size, extent - i) for i in range(0, extent, size)]


def build_task_graph(plan: PePlan, dims: LayerDims, geom: ArrayGeometry | None = None,
                     cost: CostModel | None = None, activation: bool = True) -> TaskGraph:
    """Tasks and dependencies of one layer.

    X @ W tiles run on lanes of the upper rows: a lane chains one engine per
    32-deep slice of the inner dimension, so a tile takes one 32x32x32 step
    per pass through the lane. A @ B work is one task per (active A tile,
    32-column slab); it reads the two stacked B tiles under that A tile.
    """
    geom = geom or ArrayGeometry()
    cost = cost or CostModel()
    if plan.rows != dims.n or plan.cols != dims.n:
        raise ShapeError(f"plan is {plan.rows}x{plan.cols}, layer has N={dims.n}")
    if min(dims.n, dims.f_in, dims.f_out) < 1:
        raise ShapeError(f"layer dims must be positive, got {dims}")
    xt, at = geom.xw_tile, geom.ab_tile
    if plan.tile_size != at:
        raise ShapeError(f"plan tile {plan.tile_size} differs from array A tile {at}")
    tasks: list[Task] = []

    def add(name, cls, duration, deps=(), kind=""):
        tasks.append(Task(len(tasks), name, cls, float(duration), sorted(set(deps)), kind))
        return tasks[-1].tid

    depth = math.ceil(dims.f_in / xt)
    lane_len = min(depth, geom.xw_engines)
    lanes = max(1, geom.xw_engines // lane_len)
    passes = math.ceil(depth / lane_len)
    row_blocks = _blocks(dims.n, xt)
    slabs = _blocks(dims.f_out, xt)
    xw = {}
    for s, w in enumerate(slabs):  # slab-major, so whole B column slabs finish early
        for i, h in enumerate(row_blocks):
            xw[i, s] = add(f"XW({i},{s})", XW, cost.dense_tpe_time(h, xt, w) * passes)

    per = at // xt
    for a in plan.assignments:
        if a.kind not in (PeKind.DENSE, PeKind.SPARSE):
            continue
        for s, w in enumerate(slabs):
            for c in a.active_tiles:
                k = min(at, dims.n - c * at)
                if a.kind is PeKind.DENSE:
                    compute = cost.dense_tpe_time(a.height, k, w)
                else:
                    compute = cost.sparse_stpe_time(a.height, k, w, a.padded_per_tile / (a.height * k))
                move = cost.transfer_time(k * w * F32, Channel.PL_AIE)
                # the last tile of the row finishes the output tile and applies the activation
                act = cost.activation_time(a.height * w) if activation and c == a.active_tiles[-1] else 0.0
                deps = [xw[i, s] for i in range(c * per, c * per + per) if (i, s) in xw]
                add(f"AB({a.tile_row},{c},{s})", AB, compute + move + act, deps, a.kind.value)

    if plan.residual.nnz:
        res_blocks = np.unique(plan.residual.col_idx // xt).tolist()
        for s, w in enumerate(slabs):
            deps = [xw[i, s] for i in res_blocks]
            add(f"PL({s})", PL, cost.pl_spmm_time(plan.residual.nnz, w), deps)

    add("Reconfig", CFG, cost.reconfig_time, list(xw.values()))

    a_bytes = (plan.engine.nnz + plan.residual.nnz) * 2 * F32 + (dims.n + 1) * F32
    io_bytes = (dims.n * dims.f_in + dims.f_in * dims.f_out) * F32 + a_bytes
    return TaskGraph(tasks, lanes, geom.ab_engines, geom.xw_engines, cost.transfer_time(io_bytes, Channel.DDR))


@dataclass(frozen=True)
class TraceEvent:
    task: str
    cls: str
    kind: str
    engine: str
    start: float
    end: float


@dataclass
class ScheduleTrace:
    events: list[TraceEvent]
    makespan: float
    engines: dict[str, str]  # engine id -> class
    policy: str = "pipelined"

    def busy(self) -> dict[str, float]:
        out = {e: 0.0 for e in self.engines}
        for ev in self.events:
            out[ev.engine] += ev.end - ev.start
        return out

    def to_dict(self) -> dict:
        return {"policy": self.policy, "makespan": self.makespan,
                "events": [asdict(e) for e in self.events]}

    def save_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    def save_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["task", "engine", "start", "end"])
            for e in self.events:
                w.writerow([e.task, e.engine, repr(e.start), repr(e.end)])


def simulate(tg: TaskGraph, geom: ArrayGeometry | None = None, policy: str = "pipelined") -> ScheduleTrace:
    """List scheduling: ready tasks go to idle engines of their class, FIFO by
    (ready time, task id); idle engines are handed out round-robin."""
    if policy not in ("pipelined", "sequential"):
        raise ValueError(f"unknown policy {policy!r}")
    tg.topological_order()
    n = len(tg.tasks)
    deps = [list(t.deps) for t in tg.tasks]
    if policy == "sequential":
        xw_ids = [t.tid for t in tg.tasks if t.cls == XW]
        for t in tg.tasks:
            if t.cls in (AB, PL):
                deps[t.tid] = sorted(set(deps[t.tid]) | set(xw_ids))
    remaining = [len(d) for d in deps]
    users: list[list[int]] = [[] for _ in range(n)]
    for i, d in enumerate(deps):
        for j in d:
            users[j].append(i)

    engines: dict[str, str] = {}
    idle: dict[str, deque] = {XW: deque(), AB: deque(), PL: deque(), CFG: deque()}

    def add_engines(cls, prefix, start, count):
        for k in range(start, start + count):
            eid = f"{prefix}{k}"
            engines[eid] = cls
            idle[cls].append(eid)

    add_engines(XW, "xw", 0, tg.xw_lanes)
    add_engines(AB, "ab", 0, tg.ab_engines)
    add_engines(PL, "pl", 0, 1)
    add_engines(CFG, "cfg", 0, 1)

    ready: dict[str, list] = {c: [] for c in idle}
    for i in range(n):
        if remaining[i] == 0:
            heapq.heappush(ready[tg.tasks[i].cls], (0.0, i))
    running: list = []
    events: list[TraceEvent] = []
    now = 0.0
    done = 0
    while done < n:
        for cls in (XW, AB, PL, CFG):
            while ready[cls] and idle[cls]:
                _, i = heapq.heappop(ready[cls])
                eid = idle[cls].popleft()
                t = tg.tasks[i]
                heapq.heappush(running, (now + t.duration, i, eid))
                events.append(TraceEvent(t.name, t.cls, t.kind, eid, now, now + t.duration))
        if not running:
            raise ValidationError("simulation stalled with unfinished tasks")
        now = running[0][0]
        while running and running[0][0] == now:
            _, i, eid = heapq.heappop(running)
            done += 1
            idle[tg.tasks[i].cls].append(eid)
            if tg.tasks[i].cls == CFG:
                add_engines(AB, "ab", tg.ab_engines, tg.reconfig_engines)
            for u in users[i]:
                remaining[u] -= 1
                if remaining[u] == 0:
                    heapq.heappush(ready[tg.tasks[u].cls], (now, u))
    makespan = max((e.end for e in events), default=0.0)
    return ScheduleTrace(events, makespan, engines, policy)


def layer_latency(tg: TaskGraph, trace: ScheduleTrace) -> float:
    """Compute makespan overlapped with the layer's DDR streaming."""
    return max(trace.makespan, tg.ddr_time)


def utilization_report(trace: ScheduleTrace) -> dict:
    classes = (XW, AB, PL)
    busy = trace.busy()
    report = {"makespan": trace.makespan, "classes": {}}
    for cls in classes:
        ids = [e for e, c in trace.engines.items() if c == cls]
        b = sum(busy[e] for e in ids)
        cap = len(ids) * trace.makespan
        report["classes"][cls] = {
            "engines": len(ids),
            "busy_time": b,
            "busy_fraction": b / cap if cap > 0 else 0.0,
            "stall_time": cap - b if cap > 0 else 0.0,
        }
    aie = report["classes"][XW]["busy_time"] + report["classes"][AB]["busy_time"]
    pl = report["classes"][PL]["busy_time"]
    ab_events = [e for e in trace.events if e.cls == AB]
    report["pl_work_share"] = pl / (pl + aie) if pl + aie > 0 else 0.0
    report["sparse_pe_fraction"] = (sum(e.kind == PeKind.SPARSE.value for e in ab_events) / len(ab_events)
                                    if ab_events else 0.0)
    report["total_busy"] = float(sum(busy.values()))
    return report
