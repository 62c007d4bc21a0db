import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from ldmcast import __version__
from ldmcast.cli import EXIT_FAILED, EXIT_IO, EXIT_OK, EXIT_USAGE, main
from ldmcast.persist import load_instance, load_result

FAST = ["--ccp-restarts", "1"]


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"N": 2, "K": 2, "L": 2, "bs_power_dbm": 20, "backhaul_mbps": 100, "seed": 4}))
    return path


@pytest.fixture
def instance_path(tmp_path, config):
    out = tmp_path / "inst.json"
    assert main(["generate", str(config), "-o", str(out)]) == EXIT_OK
    return out


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


# ---- generate


def test_generate_writes_instance(instance_path):
    inst = load_instance(instance_path)
    assert (inst.N, inst.K, inst.L, inst.seed) == (2, 2, 2, 4)
    data = json.loads(instance_path.read_text())
    assert data["config"]["backhaul_mbps"] == 100


def test_generate_is_idempotent(tmp_path, config):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    main(["generate", str(config), "-o", str(a)])
    main(["generate", str(config), "-o", str(b)])
    assert a.read_text() == b.read_text()


def test_generate_large_config(tmp_path):
    cfg = tmp_path / "big.json"
    cfg.write_text(json.dumps({"N": 7, "K": 10, "L": 4, "bs_power_dbm": 20, "backhaul_mbps": 100}))
    out = tmp_path / "big_inst.json"
    assert main(["generate", str(cfg), "-o", str(out)]) == EXIT_OK
    assert load_instance(out).channels.shape == (10, 28)


def test_generate_seed_range(tmp_path, config):
    pattern = str(tmp_path / "inst_{seed}.json")
    assert main(["generate", str(config), "-o", pattern, "--seeds", "0:3"]) == EXIT_OK
    seeds = [load_instance(tmp_path / f"inst_{s}.json").seed for s in range(3)]
    assert seeds == [0, 1, 2]
    assert main(["generate", str(config), "-o", str(tmp_path / "x.json"), "--seeds", "0:3"]) == EXIT_USAGE


def test_generate_missing_field_is_named(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"N": 2, "K": 2, "L": 2, "bs_power_dbm": 20}))
    assert main(["generate", str(cfg), "-o", str(tmp_path / "o.json")]) == EXIT_USAGE
    assert "backhaul_mbps" in capsys.readouterr().err


def test_generate_bad_json_and_missing_file(tmp_path):
    cfg = tmp_path / "bad.json"
    cfg.write_text("{not json")
    assert main(["generate", str(cfg), "-o", str(tmp_path / "o.json")]) == EXIT_USAGE
    assert main(["generate", str(tmp_path / "nope.json"), "-o", str(tmp_path / "o.json")]) == EXIT_IO


# ---- solve


def test_solve_ccp(tmp_path, instance_path):
    out = tmp_path / "res.json"
    assert main(["solve", str(instance_path), "--solver", "ccp", "-o", str(out)] + FAST) == EXIT_OK
    inst, doc, sols = load_result(out)
    assert doc["solver"] == "ccp" and doc["software_version"] == __version__
    entry = doc["solutions"]["main"]
    assert entry["feasibility"]["feasible"]
    for key in ("objective_bps", "rates_bps", "rates_bps_per_hz", "multicast_cluster_size",
                "mean_unicast_cluster_size"):
        assert key in entry
    assert doc["params"]["ccp_restarts"] == 1 and "wall_time_s" in doc
    rows = read_csv(out.with_suffix(".trace.csv"))
    assert rows and {"run", "stage", "objective_bps_per_hz", "seed", "params", "version"} <= set(rows[0])
    assert main(["validate", str(out)]) == EXIT_OK


def test_solve_bb_certificate(tmp_path, instance_path):
    out = tmp_path / "bb.json"
    trace = tmp_path / "bb.csv"
    assert main(["solve", str(instance_path), "--solver", "bb", "-o", str(out), "--trace", str(trace)]) == EXIT_OK
    doc = json.loads(out.read_text())
    cert = doc["certificate"]
    assert cert["status"] == "converged" and cert["gap_bps_per_hz"] <= 1e-2
    rows = read_csv(trace)
    ub = [float(r["upper_bound_bps"]) for r in rows]
    assert all(b <= a * (1 + 1e-12) for a, b in zip(ub, ub[1:]))
    assert rows[0]["seed"] == "4" and rows[0]["solver"] == "bb"


def test_solve_static_full_cluster(tmp_path, instance_path):
    out = tmp_path / "st.json"
    assert main(["solve", str(instance_path), "--solver", "static", "-o", str(out)] + FAST) == EXIT_OK
    entry = json.loads(out.read_text())["solutions"]["main"]
    assert entry["multicast_cluster_size"] == 2


def test_solve_tdm(tmp_path, instance_path):
    out = tmp_path / "tdm.json"
    assert main(["solve", str(instance_path), "--solver", "tdm", "--t-m", "0.25", "-o", str(out)] + FAST) == EXIT_OK
    doc = json.loads(out.read_text())
    mc = doc["solutions"]["multicast_only"]["multicast_rate_bps"]
    uc = doc["solutions"]["unicast_only"]["unicast_sum_rate_bps"]
    assert doc["tdm"]["multicast_rate_bps"] == pytest.approx(0.25 * mc)
    assert doc["tdm"]["unicast_sum_rate_bps"] == pytest.approx(0.75 * uc)


@pytest.mark.parametrize("argv", [
    ["--eta", "1.5"],
    ["--eps", "0"],
    ["--t-m", "2"],
    ["--solver", "wmmse"],
])
def test_solve_usage_errors(tmp_path, instance_path, argv):
    out = tmp_path / "r.json"
    assert main(["solve", str(instance_path), "-o", str(out)] + argv) == EXIT_USAGE


def test_solve_malformed_instance(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"kind": "ldmcast.instance", "schema_version": 1}))
    assert main(["solve", str(bad), "-o", str(tmp_path / "r.json")]) == EXIT_USAGE


def test_solve_missing_instance(tmp_path):
    assert main(["solve", str(tmp_path / "none.json"), "-o", str(tmp_path / "r.json")]) == EXIT_IO


# ---- validate


def test_validate_detects_tampering(tmp_path, instance_path):
    out = tmp_path / "res.json"
    main(["solve", str(instance_path), "-o", str(out)] + FAST)
    doc = json.loads(out.read_text())
    rates = doc["solutions"]["main"]["rates_bps_per_hz"]
    doc["solutions"]["main"]["rates_bps_per_hz"] = [r * 2 + 1 for r in rates]
    out.write_text(json.dumps(doc))
    assert main(["validate", str(out)]) == EXIT_FAILED


def test_validate_failed_result(tmp_path, instance_path, inst222):
    from ldmcast.persist import result_document, save_result

    path = tmp_path / "failed.json"
    save_result(result_document(inst222, "bb", {}, "failed"), path)
    assert main(["validate", str(path)]) == EXIT_FAILED


# ---- sweep


@pytest.fixture
def two_instances(tmp_path, config):
    pattern = str(tmp_path / "s_{seed}.json")
    main(["generate", str(config), "-o", pattern, "--seeds", "0:2"])
    return [str(tmp_path / f"s_{s}.json") for s in range(2)]


def test_backhaul_sweep(tmp_path, two_instances):
    out = tmp_path / "agg.csv"
    svg = tmp_path / "plot.svg"
    argv = ["sweep", *two_instances, "--axis", "backhaul", "--values", "50", "200",
            "--solvers", "ccp", "static:1", "-o", str(out), "--svg", str(svg)] + FAST
    assert main(argv) == EXIT_OK
    agg = read_csv(out)
    assert [(r["value"], r["solver"]) for r in agg] == [("50.0", "ccp"), ("50.0", "static:1"),
                                                         ("200.0", "ccp"), ("200.0", "static:1")]
    assert all(r["n_ok"] == "2" and r["seeds"] == "0 1" and r["version"] == __version__ for r in agg)
    cells = read_csv(out.with_suffix(".cells.csv"))
    assert len(cells) == 8
    assert all(c["params"] and c["seed"] in ("0", "1") for c in cells)
    ccp = {r["value"]: float(r["mean_objective_bps"]) for r in agg if r["solver"] == "ccp"}
    assert ccp["200.0"] >= ccp["50.0"] * (1 - 1e-3)
    assert svg.read_text().startswith("<svg")


def test_eta_sweep_uses_pure_endpoints(tmp_path, two_instances):
    out = tmp_path / "eta.csv"
    argv = ["sweep", two_instances[0], "--axis", "eta", "--values", "0", "0.5", "1", "-o", str(out)] + FAST
    assert main(argv) == EXIT_OK
    cells = read_csv(out.with_suffix(".cells.csv"))
    by_value = {c["value"]: c for c in cells}
    assert float(by_value["0.0"]["multicast_rate_bps"]) == 0.0
    assert float(by_value["1.0"]["unicast_sum_rate_bps"]) == 0.0


def test_region_sweeps(tmp_path, two_instances):
    out = tmp_path / "tm.csv"
    argv = ["sweep", two_instances[0], "--axis", "t_m", "--values", "0", "0.5", "1", "-o", str(out)] + FAST
    assert main(argv) == EXIT_OK
    rows = read_csv(out)
    pts = np.array([[float(r["mean_multicast_rate_bps"]), float(r["mean_unicast_sum_rate_bps"])] for r in rows])
    assert pts[1] == pytest.approx((pts[0] + pts[2]) / 2)  # TDM midpoint lies on the segment

    share = tmp_path / "share.csv"
    argv = ["sweep", two_instances[0], "--axis", "share", "--values", "0", "0.5", "1", "-o", str(share),
            "--svg", str(tmp_path / "share.svg")] + FAST
    assert main(argv) == EXIT_OK
    rows = read_csv(share)
    mc = [float(r["mean_multicast_rate_bps"]) for r in rows]
    assert mc[1] >= 0.5 * mc[2] - 1e-6


def test_sweep_records_failures(tmp_path, two_instances):
    out = tmp_path / "bad.csv"
    argv = ["sweep", two_instances[0], "--axis", "share", "--values", "0.5", "--solvers", "bb", "-o", str(out)]
    assert main(argv) == EXIT_FAILED
    cells = read_csv(out.with_suffix(".cells.csv"))
    assert cells[0]["status"] == "failed" and cells[0]["error"]


@pytest.mark.parametrize("argv", [
    ["--axis", "eta", "--values", "2"],
    ["--axis", "backhaul", "--values", "-1"],
    ["--axis", "backhaul", "--values", "10", "--solvers", "static:x"],
    ["--axis", "backhaul", "--values", "10", "--solvers", "greedy"],
])
def test_sweep_usage_errors(tmp_path, two_instances, argv):
    assert main(["sweep", two_instances[0], "-o", str(tmp_path / "x.csv")] + argv) == EXIT_USAGE


def test_threads_env(tmp_path, two_instances, monkeypatch):
    monkeypatch.setenv("LDMCAST_THREADS", "many")
    argv = ["sweep", *two_instances, "--axis", "backhaul", "--values", "50", "-o", str(tmp_path / "x.csv")]
    assert main(argv) == EXIT_USAGE


def test_parallel_sweep_matches_serial(tmp_path, two_instances):
    base = ["sweep", *two_instances, "--axis", "backhaul", "--values", "100", "--solvers", "static:1"] + FAST
    assert main(base + ["-o", str(tmp_path / "a.csv"), "--jobs", "1"]) == EXIT_OK
    assert main(base + ["-o", str(tmp_path / "b.csv"), "--jobs", "2"]) == EXIT_OK
    a = read_csv(tmp_path / "a.csv")
    b = read_csv(tmp_path / "b.csv")
    assert [r["mean_objective_bps"] for r in a] == [r["mean_objective_bps"] for r in b]


# ---- entry point


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "ldmcast", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and __version__ in out.stdout
    out = subprocess.run([sys.executable, "-m", "ldmcast", "solve"], capture_output=True, text=True)
    assert out.returncode == EXIT_USAGE
