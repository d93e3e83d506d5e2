"""Command-line front end: ``hetgcn <subcommand> ...``.

Exit codes: 0 success, 1 validation failure, 2 bad arguments or inputs.
Every JSON report embeds the effective run configuration and carries no
timestamps, so reruns with the same arguments are byte-identical.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import costmodel
from .errors import ParameterError, ShapeError, ValidationError
from .gcn import FINAL_ACTIVATIONS, GcnModel, infer_timed
from .matcore import normalize_adjacency, read_dense, read_matrix_market, write_dense, write_matrix_market
from .pegen import PlanParams, generate_pe_plan, load_plan, split_is_lossless
from .pipesim import ArrayGeometry, LayerDims, build_task_graph, layer_latency, simulate, utilization_report
from .reorder import (Permutation, apply_permutation, block_density_profile, gen_sbm, load_permutation,
                      reorder_graph, save_permutation)

log = logging.getLogger("hetgcn")


@dataclass
class RunConfig:
    command: str
    graph: str | None = None
    features: str | None = None
    weights: list[str] = field(default_factory=list)
    costs: str | None = None
    permutation: str | None = None
    tile_size: int = 64
    tau: float = 0.3
    delta: float = 2.0
    p: float = 0.9
    d: float = 0.5
    pl_cutoff: float = 0.01
    residual_rule: str = "magnitude"
    tile_demotion: bool = True
    parts: int = 1
    seed: int = 0
    reorder: bool = False
    policy: str = "pipelined"
    final_activation: str = "none"

    def plan_params(self) -> PlanParams:
        return PlanParams(self.tile_size, self.delta, self.p, self.d, self.tau, self.pl_cutoff,
                          self.residual_rule, self.tile_demotion)

    def cost_model(self) -> costmodel.CostModel:
        return costmodel.CostModel.load(self.costs) if self.costs else costmodel.CostModel()


def _config(args, **extra) -> RunConfig:
    keys = {f for f in RunConfig.__dataclass_fields__}
    values = {k: v for k, v in vars(args).items() if k in keys}
    values.update(extra)
    for k in ("graph", "features", "costs", "permutation"):
        if values.get(k) is not None:
            values[k] = str(values[k])
    values["weights"] = [str(w) for w in values.get("weights") or []]
    return RunConfig(command=args.command, **{k: v for k, v in values.items() if k != "command"})


def _write_report(path, report: dict) -> None:
    text = json.dumps(report, indent=2, sort_keys=True)
    if path:
        Path(path).write_text(text + "\n")
    else:
        print(text)


def _load_graph(cfg: RunConfig, normalize: bool):
    a = read_matrix_market(cfg.graph)
    if normalize:
        a = normalize_adjacency(a)
    if cfg.permutation:
        a = apply_permutation(a, load_permutation(cfg.permutation))
    return a


# subcommands -------------------------------------------------------------------


def cmd_gen_sbm(args) -> int:
    a = gen_sbm(args.nodes, args.communities, args.p_in, args.p_out, args.seed)
    if args.shuffle_seed is not None:
        a = apply_permutation(a, Permutation.random(args.nodes, args.shuffle_seed))
    write_matrix_market(args.output, a)
    log.info("wrote %s: %d nodes, %d nonzeros", args.output, a.rows, a.nnz)
    return 0


def cmd_reorder(args) -> int:
    cfg = _config(args, graph=args.input, reorder=True)
    a = read_matrix_market(cfg.graph)
    perm = reorder_graph(a, parts=cfg.parts, seed=cfg.seed)
    save_permutation(args.output, perm)
    b = apply_permutation(a, perm)
    if args.matrix_out:
        write_matrix_market(args.matrix_out, b)
    before = block_density_profile(a, args.block_size)
    after = block_density_profile(b, args.block_size)
    _write_report(args.report, {
        "config": asdict(cfg),
        "block_size": args.block_size,
        "before": before.to_dict(),
        "after": after.to_dict(),
        "diag_density_gain": after.mean_diag_density / before.mean_diag_density
        if before.mean_diag_density > 0 else None,
    })
    return 0


def cmd_plan(args) -> int:
    cfg = _config(args, graph=args.input)
    a = _load_graph(cfg, args.normalize)
    plan = generate_pe_plan(a, cfg.plan_params())
    if not split_is_lossless(plan, a):
        print("error: engine and residual entries do not rebuild the matrix", file=sys.stderr)
        return 1
    plan.save(args.output)
    if args.report:
        _write_report(args.report, {"config": asdict(cfg), "source_nnz": a.nnz, **plan.summary()})
    log.info("plan: %s", plan.kind_counts())
    return 0


def _model(args, f_in: int, cfg: RunConfig) -> GcnModel:
    if cfg.weights:
        if len(cfg.weights) != 2:
            raise ParameterError("--weights takes two files: W1 and W2")
        return GcnModel(read_dense(cfg.weights[0]), read_dense(cfg.weights[1]))
    return GcnModel.init(f_in, args.classes, args.hidden, cfg.seed)


def cmd_infer(args) -> int:
    cfg = _config(args, graph=args.input, weights=list(args.weights or []))
    a = _load_graph(cfg, not args.normalized)
    if cfg.features:
        x = read_dense(cfg.features)
    elif args.feature_dim:
        x = np.random.default_rng(cfg.seed).random((a.rows, args.feature_dim), dtype=np.float32)
    elif args.skip_functional:
        x = None
    else:
        raise ParameterError("give --features or --feature-dim")
    f_in = x.shape[1] if x is not None else (args.feature_dim or 0)
    if x is None and not cfg.weights:
        raise ParameterError("timing-only runs need --weights or --feature-dim")
    model = _model(args, f_in, cfg)
    res = infer_timed(a, x, model, cfg.plan_params(), ArrayGeometry(), cfg.cost_model(),
                      reorder=cfg.reorder, seed=cfg.seed, parts=cfg.parts, policy=cfg.policy,
                      final_activation=cfg.final_activation, skip_functional=args.skip_functional)
    if res.logits is not None and args.output:
        write_dense(args.output, res.logits)
    layers = [{k: v for k, v in layer.items() if k != "trace"} for layer in res.layers]
    _write_report(args.report, {"config": asdict(cfg), "stats": res.stats, "layers": layers,
                                "latency": res.latency})
    return 0


def cmd_simulate(args) -> int:
    cfg = _config(args, graph=args.input)
    if args.plan:
        plan = load_plan(args.plan)
        for k, v in asdict(plan.params).items():
            setattr(cfg, k, v)
    elif cfg.graph:
        plan = generate_pe_plan(_load_graph(cfg, args.normalize), cfg.plan_params())
    else:
        raise ParameterError("give --plan or --input")
    cost = cfg.cost_model()
    geom = ArrayGeometry()
    tg = build_task_graph(plan, LayerDims(plan.rows, args.f_in, args.f_out), geom, cost)
    trace = simulate(tg, geom, cfg.policy)
    if args.trace_json:
        trace.save_json(args.trace_json)
    if args.trace_csv:
        trace.save_csv(args.trace_csv)
    _write_report(args.report, {
        "config": asdict(cfg), "plan_file": str(args.plan) if args.plan else None,
        "dims": [plan.rows, args.f_in, args.f_out], "tasks": tg.counts(),
        "makespan": trace.makespan, "ddr_time": tg.ddr_time, "latency": layer_latency(tg, trace),
        "utilization": utilization_report(trace), "plan": plan.summary(),
    })
    return 0


def cmd_validate_costs(args) -> int:
    cfg = _config(args)
    cost = cfg.cost_model()
    rows = costmodel.calibration_table(cost)
    ok_cross, cross = costmodel.crossover_ok(cost)
    print(f"{'quantity':<36} {'measured':>10} {'model':>10} {'dev':>8}  status")
    for r in rows:
        status = "info" if r.tolerance is None else ("ok" if r.ok else "FAIL")
        print(f"{r.quantity:<36} {r.measured:>10.4g} {r.model:>10.4g} {r.deviation:>8.2%}  {status}")
    cross_txt = "none" if cross is None else f"{cross:.4%}"
    print(f"{'PL/AIE crossover density':<36} {'[1%,5%]':>10} {cross_txt:>10} {'':>8}  {'ok' if ok_cross else 'FAIL'}")
    failed = [r.quantity for r in rows if not r.ok] + ([] if ok_cross else ["crossover"])
    if args.report:
        _write_report(args.report, {"config": asdict(cfg), "rows": [r.to_dict() for r in rows],
                                    "crossover": cross, "crossover_ok": ok_cross, "failed": failed})
    if failed:
        print(f"validation failed: {', '.join(failed)}", file=sys.stderr)
        return 1
    return 0


# argument parsing ----------------------------------------------------------------


def _plan_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("planning")
    g.add_argument("--tile-size", type=int, default=64)
    g.add_argument("--tau", type=float, default=0.3, help="grouping threshold")
    g.add_argument("--delta", type=float, default=2.0, help="max/ave ratio that triggers find_nnz")
    g.add_argument("--p", type=float, default=0.9, help="tile coverage of the row budget")
    g.add_argument("--d", type=float, default=0.5, help="padded density of a dense tile-row")
    g.add_argument("--pl-cutoff", type=float, default=0.01)
    g.add_argument("--residual-rule", choices=["magnitude", "first-k"], default="magnitude")
    g.add_argument("--no-tile-demotion", dest="tile_demotion", action="store_false",
                   help="keep sparse tiles below the PL cutoff on the engines")
    g.add_argument("--permutation", type=Path, help="apply this permutation JSON first")
    g.add_argument("--costs", type=Path, help="cost-model JSON overrides")
    g.add_argument("--policy", choices=["pipelined", "sequential"], default="pipelined")
    g.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hetgcn", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-sbm", help="write a stochastic block model graph")
    p.add_argument("--nodes", type=int, required=True)
    p.add_argument("--communities", type=int, required=True)
    p.add_argument("--p-in", type=float, required=True)
    p.add_argument("--p-out", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--shuffle-seed", type=int, help="randomly relabel the vertices")
    p.add_argument("-o", "--output", type=Path, required=True)
    p.set_defaults(func=cmd_gen_sbm)

    p = sub.add_parser("reorder", help="cluster-based vertex reordering")
    p.add_argument("-i", "--input", type=Path, required=True)
    p.add_argument("-o", "--output", type=Path, required=True, help="permutation JSON")
    p.add_argument("--matrix-out", type=Path, help="also write the reordered matrix")
    p.add_argument("--parts", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--block-size", type=int, default=64)
    p.add_argument("--report", type=Path)
    p.set_defaults(func=cmd_reorder)

    p = sub.add_parser("plan", help="split the adjacency across engines and PL")
    p.add_argument("-i", "--input", type=Path, required=True)
    p.add_argument("-o", "--output", type=Path, default=Path("plan.json"))
    p.add_argument("--normalize", action="store_true", help="normalize the adjacency first")
    p.add_argument("--report", type=Path)
    _plan_flags(p)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("infer", help="two-layer GCN inference with simulated timing")
    p.add_argument("-i", "--input", type=Path, required=True, help="adjacency (Matrix Market)")
    p.add_argument("--normalized", action="store_true", help="input is already normalized")
    p.add_argument("--features", type=Path, help="binary dense feature matrix")
    p.add_argument("--feature-dim", type=int, help="random features of this width")
    p.add_argument("--weights", nargs=2, type=Path, metavar=("W1", "W2"))
    p.add_argument("--hidden", type=int, default=128)
    p.add_argument("--classes", type=int, default=8)
    p.add_argument("--reorder", action="store_true")
    p.add_argument("--parts", type=int, default=1)
    p.add_argument("--final-activation", choices=list(FINAL_ACTIVATIONS), default="none")
    p.add_argument("--skip-functional", action="store_true", help="timing only")
    p.add_argument("-o", "--output", type=Path, help="logits (binary dense)")
    p.add_argument("--report", type=Path)
    _plan_flags(p)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("simulate", help="simulate one layer")
    p.add_argument("--plan", type=Path, help="plan JSON from the plan command")
    p.add_argument("-i", "--input", type=Path, help="adjacency, planned on the fly")
    p.add_argument("--normalize", action="store_true")
    p.add_argument("--f-in", type=int, required=True)
    p.add_argument("--f-out", type=int, required=True)
    p.add_argument("--trace-json", type=Path)
    p.add_argument("--trace-csv", type=Path)
    p.add_argument("--report", type=Path)
    _plan_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("validate-costs", help="compare the cost model with the board measurements")
    p.add_argument("--costs", type=Path)
    p.add_argument("--report", type=Path)
    p.set_defaults(func=cmd_validate_costs)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 1
    except (ParameterError, ShapeError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
