import json

import numpy as np
import pytest

from hetgcn.cli import main
from hetgcn.matcore import read_dense, read_matrix_market, write_dense


@pytest.fixture
def graph(tmp_path):
    path = tmp_path / "g.mtx"
    assert main(["gen-sbm", "--nodes", "512", "--communities", "8", "--p-in", "0.3", "--p-out", "0.01",
                 "--seed", "7", "-o", str(path)]) == 0
    return path


def test_plan_is_lossless_recount(tmp_path, graph):
    out = tmp_path / "plan.json"
    assert main(["plan", "-i", str(graph), "-o", str(out), "--report", str(tmp_path / "r.json")]) == 0
    plan = json.loads(out.read_text())
    source = read_matrix_market(graph)
    assert plan["summary"]["engine_nnz"] + plan["summary"]["residual_nnz"] == source.nnz
    report = json.loads((tmp_path / "r.json").read_text())
    assert report["config"]["tile_size"] == 64 and report["config"]["pl_cutoff"] == 0.01
    assert (tmp_path / "plan.npz").exists()


def test_validate_costs_passes(capsys):
    assert main(["validate-costs"]) == 0
    assert "PL/AIE crossover" in capsys.readouterr().out


def test_validate_costs_fails_on_bad_table(tmp_path, capsys):
    (tmp_path / "c.json").write_text(json.dumps({"sparse_eff_flops": [[0.1, 9.0e9], [0.6, 9.5e9]]}))
    assert main(["validate-costs", "--costs", str(tmp_path / "c.json")]) == 1
    assert "validation failed" in capsys.readouterr().err


def test_simulate_policies(tmp_path, graph):
    main(["reorder", "-i", str(graph), "-o", str(tmp_path / "p.json")])
    plan = tmp_path / "plan.json"
    assert main(["plan", "-i", str(graph), "--normalize", "--permutation", str(tmp_path / "p.json"),
                 "-o", str(plan)]) == 0
    spans = {}
    for policy in ("pipelined", "sequential"):
        rep = tmp_path / f"{policy}.json"
        assert main(["simulate", "--plan", str(plan), "--f-in", "512", "--f-out", "128", "--policy", policy,
                     "--report", str(rep), "--trace-csv", str(tmp_path / f"{policy}.csv"),
                     "--trace-json", str(tmp_path / f"{policy}_trace.json")]) == 0
        spans[policy] = json.loads(rep.read_text())["makespan"]
    assert spans["pipelined"] <= spans["sequential"]


def test_reorder_report(tmp_path):
    g = tmp_path / "s.mtx"
    main(["gen-sbm", "--nodes", "512", "--communities", "8", "--p-in", "0.3", "--p-out", "0.01", "--seed", "7",
          "--shuffle-seed", "7", "-o", str(g)])
    assert main(["reorder", "-i", str(g), "-o", str(tmp_path / "p.json"), "--report", str(tmp_path / "r.json"),
                 "--matrix-out", str(tmp_path / "o.mtx")]) == 0
    rep = json.loads((tmp_path / "r.json").read_text())
    assert rep["diag_density_gain"] >= 5.0
    assert read_matrix_market(tmp_path / "o.mtx").nnz == read_matrix_market(g).nnz


def test_infer_with_files(tmp_path, graph):
    rng = np.random.default_rng(0)
    write_dense(tmp_path / "x.bin", rng.random((512, 16), dtype=np.float32))
    write_dense(tmp_path / "w1.bin", rng.uniform(-0.1, 0.1, (16, 8)).astype(np.float32))
    write_dense(tmp_path / "w2.bin", rng.uniform(-0.1, 0.1, (8, 3)).astype(np.float32))
    assert main(["infer", "-i", str(graph), "--features", str(tmp_path / "x.bin"), "--weights",
                 str(tmp_path / "w1.bin"), str(tmp_path / "w2.bin"), "--final-activation", "softmax",
                 "-o", str(tmp_path / "z.bin"), "--report", str(tmp_path / "r.json")]) == 0
    z = read_dense(tmp_path / "z.bin")
    assert z.shape == (512, 3)
    np.testing.assert_allclose(z.sum(axis=1), 1.0, atol=1e-5)


def test_infer_skip_functional(tmp_path, graph):
    rep = tmp_path / "r.json"
    assert main(["infer", "-i", str(graph), "--feature-dim", "64", "--skip-functional", "--reorder",
                 "--report", str(rep)]) == 0
    assert json.loads(rep.read_text())["latency"] > 0


def test_bad_arguments_exit_2(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["plan"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2
    assert main(["plan", "-i", str(tmp_path / "missing.mtx")]) == 2
    assert main(["gen-sbm", "--nodes", "10", "--communities", "2", "--p-in", "0.1", "--p-out", "0.5",
                 "-o", str(tmp_path / "x.mtx")]) == 2
    assert "error" in capsys.readouterr().err


def test_reports_are_byte_identical_on_rerun(tmp_path, graph):
    runs = []
    for i in range(2):
        rep = tmp_path / f"r{i}.json"
        main(["infer", "-i", str(graph), "--feature-dim", "32", "--reorder", "--seed", "3", "-o",
              str(tmp_path / f"z{i}.bin"), "--report", str(rep)])
        runs.append((rep.read_bytes(), (tmp_path / f"z{i}.bin").read_bytes()))
    assert runs[0] == runs[1]
