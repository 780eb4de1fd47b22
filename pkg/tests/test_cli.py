import csv
import json
import subprocess
import sys

import pytest

from paced.cli import ExperimentConfig, audit_experiment, load_config, main, run_experiment
from paced.model import AuctionInstance


def write(path, doc):
    path.write_text(json.dumps(doc))
    return path


def run_cli(argv, capsys):
    code = main([str(a) for a in argv])
    return code, capsys.readouterr()


IID = {"seed": 5, "replications": 2, "tie_rule": "strict_exceed",
       "instance": {"generator": "iid", "n": 2, "t": 40},
       "policies": [{"kind": "bwk", "k": 6}, {"kind": "fixed", "lambda": 0.5}]}


def test_simulate_writes_outputs(tmp_path, capsys):
    cfg = write(tmp_path / "c.json", {**IID, "output_dir": "out"})
    code, out = run_cli(["simulate", cfg], capsys)
    assert code == 0
    d = tmp_path / "out"
    assert sorted(p.name for p in d.iterdir()) == ["report_0.json", "report_1.json", "summary.csv",
                                                    "trace_0.csv", "trace_1.csv"]
    rows = list(csv.DictReader(open(d / "summary.csv")))
    assert [r["seed"] for r in rows] == ["5", "4"]  # seed xor replication
    for key in ("lw", "lw_star_lower", "lw_star_upper", "gamma_hat_0", "reg_1", "verdict"):
        assert key in rows[0]
    assert all(r["verdict"] == "holds" for r in rows)
    assert audit_experiment(d) == []


def test_replications_byte_identical(tmp_path):
    cfg = ExperimentConfig.from_json({**IID, "replications": 5}, tmp_path)
    a = run_experiment(cfg, tmp_path / "a")
    b = run_experiment(cfg, tmp_path / "b", workers=2)
    for name in ["summary.csv"] + [f"trace_{r}.csv" for r in range(5)] + [f"report_{r}.json" for r in range(5)]:
        assert (a.output_dir / name).read_bytes() == (b.output_dir / name).read_bytes()


def test_seed_env_override(tmp_path, monkeypatch):
    cfg = write(tmp_path / "c.json", IID)
    monkeypatch.setenv("PACED_SEED", "123")
    assert load_config(cfg).seed == 123


@pytest.mark.parametrize("name, extra, lw, star, verdict", [
    # the first-price bound does not cover second-price auctions; this instance shows it failing
    ("second-price", {"eps": "0.01"}, 1.0, 100.0, "violated"),
    ("half", {"eps": "0.1"}, 10.0, 19.0, "holds"),
    ("gamma", {"gamma": 4}, 25.75, 100.0, "holds"),
])
def test_counterexample_configs(tmp_path, name, extra, lw, star, verdict):
    cfg = ExperimentConfig.from_json({"seed": 0, "instance": {"generator": name, "t": 100, **extra}}, tmp_path)
    res = run_experiment(cfg, tmp_path / name)
    row = res.rows[0]
    assert float(row["lw"]) == lw and float(row["lw_star_upper"]) == star
    assert row["verdict"] == verdict


def test_learner_long_run_has_regret_columns(tmp_path):
    cfg = ExperimentConfig.from_json({
        "seed": 1, "tie_rule": "strict_exceed", "grid_step": 1e-3,
        "instance": {"generator": "iid", "n": 2, "t": 2000},
        "policies": [{"kind": "bwk", "k": 45}, {"kind": "fixed", "lambda": 0.5}]}, tmp_path)
    row = run_experiment(cfg, tmp_path / "long").rows[0]
    assert row["t"] == 2000
    assert float(row["reg_per_round_0"]) == pytest.approx(float(row["reg_0"]) / 2000)


def test_inline_and_file_instances(tmp_path):
    inst = AuctionInstance([[0.9, 0.2], [0.4, 0.6]], [1.0, 1.0])
    inst.dump(tmp_path / "inst.json")
    pols = [{"kind": "fixed", "lambda": 0.5}] * 2
    a = run_experiment(ExperimentConfig.from_json({"seed": 0, "instance": "inst.json", "policies": pols}, tmp_path),
                       tmp_path / "a")
    b = run_experiment(ExperimentConfig.from_json({"seed": 0, "instance": inst.to_json(), "policies": pols},
                                                  tmp_path), tmp_path / "b")
    assert a.rows == b.rows


def test_submodular_config(tmp_path, capsys):
    doc = {"seed": 3, "output_dir": "sub",
           "instance": {"t": 4, "budgets": [2, 2], "valuations": [
               {"kind": "coverage", "universe": {"a": 0.6, "b": 1.0},
                "items": {"0": ["a"], "1": ["a", "b"], "2": ["b"]}},
               {"kind": "additive", "values": [0.5, 0.2, 0.9, 0.4]}]},
           "policies": [{"kind": "fixed", "lambda": 0.5}, {"kind": "fixed", "lambda": 0.7}]}
    code, _ = run_cli(["simulate", write(tmp_path / "s.json", doc)], capsys)
    assert code == 0
    report = json.loads((tmp_path / "sub" / "report_0.json").read_text())
    assert report["setting"] == "submodular" and report["lw_star"]["method"] == "exact_brute_force"
    doc["policies"][1] = {"kind": "bwk"}
    code, out = run_cli(["simulate", write(tmp_path / "s2.json", doc)], capsys)
    assert code == 2 and "open problem" in out.err


@pytest.mark.parametrize("doc", [
    {"instance": {"generator": "iid", "n": 2, "t": 5}},
    {"seed": 1, "replications": 0, "instance": {"generator": "iid", "n": 2, "t": 5}},
    {"seed": 1, "instance": "missing.json"},
    {"seed": 1, "instance": {"generator": "iid", "n": 2, "t": 5}, "mystery": True},
    {"seed": 1, "instance": {"generator": "iid", "n": 2, "t": 5}, "policies": [{"kind": "fixed", "lambda": 0.5}]},
])
def test_config_errors_exit_2(tmp_path, capsys, doc):
    code, out = run_cli(["simulate", write(tmp_path / "bad.json", doc)], capsys)
    assert code == 2 and "config error" in out.err


def test_policy_abort_exits_3(tmp_path, capsys):
    doc = {"seed": 1, "instance": {"n": 1, "t": 2, "values": [[0.5, 0.5]], "budgets": [1]},
           "policies": [{"kind": "script", "bids": [0.1, -1]}]}
    code, out = run_cli(["simulate", write(tmp_path / "c.json", doc)], capsys)
    assert code == 3 and "runtime error" in out.err


def test_hindsight_and_welfare_subcommands(tmp_path, capsys):
    run_experiment(ExperimentConfig.from_json(IID, tmp_path), tmp_path / "o")
    trace = tmp_path / "o" / "trace_0.csv"
    code, out = run_cli(["hindsight", trace, "--player", 0], capsys)
    doc = json.loads(out.out)
    assert code == 0 and {"lambda_star", "u_star", "certified_gap", "regret_at_gamma1"} <= set(doc)
    code, out = run_cli(["welfare", trace], capsys)
    doc = json.loads(out.out)
    assert code == 0 and doc["verdict"] == "holds"
    assert set(doc["lw_star"]) == {"lower", "upper", "method"}
    code, out = run_cli(["hindsight", trace, "--player", 7], capsys)
    assert code == 2


def test_welfare_with_instance(tmp_path, capsys):
    code, _ = run_cli(["counterexample", "second-price", "--t", 10, "--eps", "0.1",
                       "--trace-out", tmp_path / "t.csv", "--instance-out", tmp_path / "i.json"], capsys)
    assert code == 0
    code, out = run_cli(["welfare", tmp_path / "t.csv", "--instance", tmp_path / "i.json"], capsys)
    doc = json.loads(out.out)
    assert doc["lw"] == pytest.approx(1.0) and doc["lw_star"]["upper"] == pytest.approx(10.0)


def test_bounds_subcommand(capsys):
    code, out = run_cli(["bounds", "--curve", 1, 10, 0.05], capsys)
    lines = out.out.splitlines()
    assert code == 0 and len(lines) == 182 and lines[0].startswith("gamma,poa_additive")
    code, out = run_cli(["bounds", "--gamma", 2], capsys)
    assert json.loads(out.out)["poa_submodular"] == pytest.approx(2 + 2**0.5)


def test_counterexample_subcommand(capsys):
    code, out = run_cli(["counterexample", "half", "--t", 100, "--eps", "0.1"], capsys)
    doc = json.loads(out.out)
    assert code == 0
    assert doc["measured"]["lw"] == 10 and doc["measured"]["best_sequence_regrets"][0] == 1
    code, out = run_cli(["counterexample", "gamma", "--t", 100, "--gamma", "2"], capsys)
    doc = json.loads(out.out)
    assert doc["measured"]["player_ratios"][0] <= 2


def test_console_script_help():
    res = subprocess.run([sys.executable, "-m", "paced.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for sub in ("simulate", "hindsight", "welfare", "bounds", "counterexample", "accept"):
        assert sub in res.stdout
