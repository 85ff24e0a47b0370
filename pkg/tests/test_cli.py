import json
import subprocess
import sys

import pytest

from crowdexpress.cli import run
from crowdexpress.io import TRAJECTORY_HEADER

from conftest import FIXTURE_CSV


@pytest.fixture(scope="module")
def network_file(tmp_path_factory):
    out = tmp_path_factory.mktemp("net") / "network.json"
    assert run(["build-network", "--trajectories", str(FIXTURE_CSV), "--out", str(out)]) == 0
    return out


def last_json(capsys):
    return json.loads(capsys.readouterr().out.strip().splitlines()[-1])


def test_build_then_simulate(network_file, tmp_path, capsys):
    doc = json.loads(network_file.read_text())
    assert doc["format"] == "crowdexpress-network"
    assert [s["id"] for s in doc["stations"]] == list(range(len(doc["stations"])))
    out = tmp_path / "run"
    code = run(["simulate", "--network", str(network_file), "--trajectories", "fixture",
                "--policy", "maxProb", "--packages", "60", "--seed", "4", "--out", str(out)])
    assert code == 0
    summary = json.loads((out / "summary.json").read_text())
    assert "success_rate" in summary and summary["policy"] == "maxProb"
    assert summary["n_packages"] == 60
    assert (out / "ledger.csv").read_text().startswith("package_id,policy,origin,dest")
    assert (out / "config.toml").exists()


def test_prob_prints_one_json_line(network_file, capsys):
    args = ["prob", "--network", str(network_file), "--from", "0", "--to", "1",
            "--budget", "3600", "--slot", "1"]
    assert run(args) == 0
    dfs = last_json(capsys)
    assert set(dfs) == {"probability", "path", "nodes_expanded", "trimmed"}
    assert run(args + ["--oracle"]) == 0
    assert last_json(capsys)["probability"] == pytest.approx(dfs["probability"], abs=1e-9)


def test_echoed_config_reproduces_the_run(network_file, tmp_path):
    first = tmp_path / "a"
    run(["simulate", "--network", str(network_file), "--trajectories", "fixture",
         "--policy", "DesCloser", "--packages", "40", "--seed", "2", "--out", str(first)])
    second = tmp_path / "b"
    assert run(["simulate", "--config", str(first / "config.toml"), "--out", str(second)]) == 0
    assert (first / "ledger.csv").read_bytes() == (second / "ledger.csv").read_bytes()


def test_unknown_flag_is_a_usage_error(capsys):
    assert run(["simulate", "--frobnicate"]) == 1
    assert "usage:" in capsys.readouterr().err
    assert run([]) == 1
    assert run(["simulate", "--network", "n.json", "--trajectories", "fixture",
                "--policy", "greedy", "--out", "x"]) == 1


def test_missing_required_value_is_a_usage_error(capsys):
    assert run(["build-network", "--out", "x.json"]) == 1
    assert "--trajectories" in capsys.readouterr().err


def test_malformed_row_is_a_data_error(tmp_path, capsys):
    lines = FIXTURE_CSV.read_text().splitlines()[:40]
    cells = lines[17].split(",")
    cells[2] = "forty"
    lines[17] = ",".join(cells)
    bad = tmp_path / "bad.csv"
    bad.write_text("\n".join(lines) + "\n")
    assert run(["build-network", "--trajectories", str(bad), "--out", str(tmp_path / "n.json")]) == 2
    err = capsys.readouterr().err
    assert "row 17" in err and "bad.csv" in err


def test_bad_config_is_a_data_error(tmp_path, capsys):
    cfg = tmp_path / "c.toml"
    cfg.write_text("network.tau = 0\n")
    assert run(["build-network", "--config", str(cfg), "--trajectories", "fixture",
                "--out", str(tmp_path / "n.json")]) == 2


def test_gen_synthetic_writes_a_trajectory_csv(tmp_path, capsys):
    out = tmp_path / "s.csv"
    assert run(["gen-synthetic", "--spec", "stations=6,days=0.02", "--seed", "3", "--out", str(out)]) == 0
    assert out.read_text().splitlines()[0] == ",".join(TRAJECTORY_HEADER)
    assert last_json(capsys)["records"] == len(out.read_text().splitlines()) - 1


def test_synthetic_pipeline(tmp_path, capsys):
    net = tmp_path / "n.json"
    spec = "synthetic:stations=10,days=1,rate_scale=0.2"
    assert run(["build-network", "--trajectories", spec + ",seed=1", "--out", str(net)]) == 0
    assert last_json(capsys)["stations"] == 10
    assert run(["simulate", "--network", str(net), "--trajectories", spec + ",seed=2",
                "--policy", "FCFS", "--packages", "30", "--out", str(tmp_path / "r")]) == 0


def test_sweep_and_report(network_file, tmp_path, capsys):
    out = tmp_path / "sweep"
    assert run(["sweep", "--network", str(network_file), "--trajectories", "fixture",
                "--policy", "DesCloser", "--dimension", "extraT", "--values", "1200,3600",
                "--packages", "30", "--out", str(out)]) == 0
    assert sorted(p.name for p in out.iterdir()) == ["extraT=1200.0", "extraT=3600.0"]
    capsys.readouterr()
    csv_out = tmp_path / "table.csv"
    assert run(["report", str(out), "--csv", str(csv_out)]) == 0
    table = capsys.readouterr().out
    assert "success_rate / extraT" in table
    rows = csv_out.read_text().splitlines()
    assert rows[0].startswith("policy,sweep,value,success_rate") and len(rows) == 3


def test_report_on_empty_directory_warns(tmp_path, capsys):
    assert run(["report", str(tmp_path)]) == 0
    captured = capsys.readouterr()
    assert "no summary.json" in captured.err
    assert captured.out.startswith("policy")


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "crowdexpress", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for sub in ("build-network", "prob", "simulate", "sweep", "gen-synthetic", "report"):
        assert sub in res.stdout
