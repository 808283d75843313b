import json
import subprocess
import sys
from pathlib import Path

import pytest

from rif.cli import main

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

PORT_MODEL = {"weights": {"kind": "point", "value": 1.0},
              "fitness": {"kind": "gpaf", "g": {"expr": "const", "value": 1},
                          "h": {"expr": "const", "value": 1}, "ell": 1}}


def write(tmp_path, doc, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


def compare_doc(**extra):
    doc = {"schema_version": 1, "experiment": "compare", "model": PORT_MODEL,
           "t_final": 20000, "replicas": 4, "seed": 1, "k_max": 20,
           "tolerances": {"max_abs": 0.02, "k_compare": 5}}
    doc.update(extra)
    return doc


def test_solve_port(tmp_path, capsys):
    assert main(["solve", "--config", str(CONFIGS / "port_solve.json"),
                 "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "report.json").read_text())
    assert abs(rep["alpha"] - 2.0) < 1e-9 and rep["regime"] == "C1"
    assert rep["provenance"]["config_hash"]
    assert json.loads(capsys.readouterr().out)["alpha"] == rep["alpha"]


def test_compare_pass_and_negative_control(tmp_path):
    ok = write(tmp_path, compare_doc())
    assert main(["compare", "--config", ok, "--out", str(tmp_path / "a"), "--threads", "2"]) == 0
    bad = write(tmp_path, compare_doc(law_perturbation={"alpha_factor": 1.5}), "bad.json")
    assert main(["compare", "--config", bad, "--out", str(tmp_path / "b")]) == 3
    rep = json.loads((tmp_path / "b" / "report.json").read_text())
    assert rep["pass"] is False and rep["checks"]["max_abs"] is False


def test_csv_provenance(tmp_path):
    cfg = write(tmp_path, compare_doc())
    main(["compare", "--config", cfg, "--seed", "99", "--out", str(tmp_path)])
    head = (tmp_path / "degree_compare.csv").read_text().splitlines()[:4]
    assert head[0].startswith("# tool: rif")
    assert head[1].startswith("# config_hash: ")
    assert head[2] == "# seed: 99"
    assert head[3] == "k,bin_lo,bin_hi,empirical,theoretical,residual"


def test_reproducible(tmp_path):
    cfg = write(tmp_path, compare_doc())
    for d in ("x", "y"):
        main(["compare", "--config", cfg, "--out", str(tmp_path / d), "--threads", "3"])
    a = (tmp_path / "x" / "degree_compare.csv").read_text()
    b = (tmp_path / "y" / "degree_compare.csv").read_text()
    assert a == b


def test_simulate_dump_tree(tmp_path):
    doc = compare_doc(experiment="simulate", t_final=100, replicas=2, epsilons=[0.1])
    cfg = write(tmp_path, doc)
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path), "--dump-tree"]) == 0
    edges = (tmp_path / "tree_edges.txt").read_text().splitlines()
    assert sum(1 for line in edges if not line.startswith("#")) == 100
    assert (tmp_path / "trajectory.csv").exists() and (tmp_path / "edge_profile.csv").exists()


def test_limits_and_phase(tmp_path):
    assert main(["limits", "--config", str(CONFIGS / "condensation_limits.json"),
                 "--out", str(tmp_path / "l")]) == 0
    rep = json.loads((tmp_path / "l" / "report.json").read_text())
    assert abs(rep["edge_law"]["atom_at_wstar"] - 0.5) < 1e-6
    assert main(["phase", "--config", str(CONFIGS / "phase_sweep.json"),
                 "--out", str(tmp_path / "p")]) == 0
    rows = json.loads((tmp_path / "p" / "report.json").read_text())["rows"]
    assert [r["regime"] for r in rows][:4] == ["Condensation"] * 4


@pytest.mark.parametrize("doc", [
    compare_doc(bogus=1),
    compare_doc(schema_version=2),
    {**compare_doc(), "seed": None},
    {k: v for k, v in compare_doc().items() if k != "seed"},
    compare_doc(model={**PORT_MODEL, "fitness": {"kind": "gpaf", "g": 1, "h": 0}}),
])
def test_bad_configs_exit_1(tmp_path, doc):
    assert main(["compare", "--config", write(tmp_path, doc)]) == 1


def test_usage_errors_exit_1(tmp_path):
    cfg = write(tmp_path, compare_doc())
    assert main(["solve", "--config", cfg]) == 1
    assert main(["compare", "--config", str(tmp_path / "missing.json")]) == 1
    assert main(["compare", "--config", cfg, "--threads", "0"]) == 1
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate", "--config", cfg])
    assert exc.value.code == 1


def test_runtime_error_exit_2(tmp_path):
    # the only weight, 1.0, falls outside every bin
    doc = compare_doc(experiment="simulate", bins=[[0, 0.5]])
    assert main(["simulate", "--config", write(tmp_path, doc)]) == 2


def test_console_script(tmp_path):
    out = subprocess.run([sys.executable, "-m", "rif.cli", "solve", "--config",
                          str(CONFIGS / "bianconi_barabasi_solve.json")],
                         capture_output=True, text=True, check=True)
    assert abs(json.loads(out.stdout)["alpha"] - 1.2550009749159754) < 1e-9


@pytest.mark.parametrize("name,expect", [
    ("port_solve.json", {"regime": "C1", "alpha": 2.0}),
    ("condensation_limits.json", None),
])
def test_solve_examples(tmp_path, name, expect):
    cfg = json.loads((CONFIGS / name).read_text())
    cfg["experiment"] = "solve"
    rep_path = tmp_path / "out"
    assert main(["solve", "--config", write(tmp_path, cfg), "--out", str(rep_path)]) == 0
    rep = json.loads((rep_path / "report.json").read_text())
    if expect:
        assert rep["regime"] == expect["regime"] and abs(rep["alpha"] - expect["alpha"]) < 1e-9
    else:
        assert rep["regime"] == "Condensation" and abs(rep["m_star"] - 0.5) < 1e-9


def test_solve_degenerate(tmp_path):
    cfg = json.loads((CONFIGS / "degenerate_compare.json").read_text())
    cfg["experiment"] = "solve"
    assert main(["solve", "--config", write(tmp_path, cfg), "--out", str(tmp_path)]) == 0
    assert json.loads((tmp_path / "report.json").read_text())["regime"] == "Degenerate"


@pytest.mark.slow
def test_wrrt_config_passes(tmp_path):
    assert main(["compare", "--config", str(CONFIGS / "wrrt_compare.json"),
                 "--out", str(tmp_path)]) == 0
