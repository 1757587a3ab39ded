import csv
import json

import pytest

from eovsim.cli import main
from eovsim.config import ConfigError
from eovsim.export import export_ramp
from eovsim.scenarios import SCENARIOS, ResultSet, Scenario, export_results, get_scenario, run_scenario
from eovsim.bench import ramp_search
from eovsim.config import BenchConfig
from test_bench import stub


def _csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_builtin_scenarios_are_valid():
    for name in ("endorsement", "hardware", "blocks", "payload",
                 "placement", "crashes"):
        s = get_scenario(name).validate()
        assert s.size == len(s.points()) >= 2
    with pytest.raises(ConfigError):
        get_scenario("fig99")


def test_bad_axis_rejected():
    with pytest.raises(ConfigError):
        Scenario("x", axes=[("network.colour", [1])]).validate()
    with pytest.raises(ConfigError):
        Scenario("x", axes=[("network.org_count", [])]).validate()
    with pytest.raises(ConfigError):
        Scenario("x", axes=[("network.orderer_count", [0])]).validate()


def test_empty_result_set_cannot_be_exported(tmp_path):
    with pytest.raises(ValueError):
        export_results(ResultSet("x", 0), Scenario("x"), tmp_path)


def test_ramp_export_pair(tmp_path):
    res = ramp_search(stub(300), BenchConfig())
    export_ramp(res, tmp_path)
    data = json.loads((tmp_path / "ramp.json").read_text())
    assert data["termination"] == "converged" and len(data["runs"]) == len(res.history)
    assert len(_csv(tmp_path / "runs.csv")) == len(res.history)


def test_sweep_rows_carry_config_hash(tmp_path):
    s = Scenario("mini", mode="run", rate=40, bench={"duration": 3},
                 axes=[("network.database", ["LevelDB", "CouchDB"]), ("network.orderer_count", [1, 3])])
    rs = run_scenario(s, out_dir=tmp_path, log=lambda _: None)
    hashes = {r["config_hash"] for r in rs.rows}
    assert len(hashes) == 4
    assert len(_csv(tmp_path / "results.csv")) == 4
    assert (tmp_path / "axis_network_database.csv").exists()
    assert (tmp_path / "point_003" / "timeline.csv").exists()


def test_failed_point_recorded(tmp_path):
    s = Scenario("bad", mode="run", rate=10, bench={"duration": 2, "method": "readData"},
                 axes=[("bench.query", ["simple", "complex_indexed"]), ("network.database", ["LevelDB"])])
    rs = run_scenario(s, out_dir=tmp_path, log=lambda _: None)
    assert [r["kind"] for r in rs.rows] == ["run", "error"]


def test_cli_sweep_is_byte_identical(tmp_path):
    args = ["sweep", "blocks", "--set", "bench.duration=2", "--set", "rate=60", "--seed", "5"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    assert files
    for f in files:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_cli_run_with_trace(tmp_path, capsys):
    code = main(["run", "--rate", "30", "--crash", "follower@1", "--trace", "--out", str(tmp_path)])
    assert code == 0
    assert (tmp_path / "events.csv").read_text().startswith("time,seq,kind,node,detail\n")
    tx = _csv(tmp_path / "trace_run.csv")
    assert list(tx[0]) == ["tx_id", "client", "visibility", "requested", "endorsed", "ordered",
                           "confirmed", "status"]
    blocks = _csv(tmp_path / "blocks_run.csv")
    assert list(blocks[0]) == ["height", "created_at", "tx_count", "bytes", "cut_reason", "term"]
    assert "throughput" in capsys.readouterr().out


def test_cli_config_files(tmp_path):
    net = tmp_path / "net.json"
    net.write_text('{"database": "LevelDB", "orderer_count": 3,}')
    assert main(["validate", str(net)]) == 0
    net.write_text('{"orderer_count": 0}')
    assert main(["validate", str(net)]) == 1
    net.write_text('{"network": {"org_count": 2, "endorsement": "OutOf(1, 2)"}, "bench": {"duration": 5}}')
    assert main(["validate", str(net)]) == 0
    net.write_text('{"duration": 5, "org_count": 2}')
    assert main(["validate", str(net)]) == 1


def test_cli_exit_codes(tmp_path):
    bench = tmp_path / "b.json"
    bench.write_text(json.dumps({"duration": 1, "frequency_bound": 20000, "retry_limit": 0}))
    assert main(["ramp", "--bench", str(bench), "--out", str(tmp_path / "r")]) == 3
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["run", "--rate", "5", "--out", str(blocker / "sub")]) == 2
    bad = tmp_path / "m.json"
    bad.write_text(json.dumps({"labels": ["a"], "ms": [[1]]}))
    assert main(["run", "--delay-matrix", str(bad), "--out", str(tmp_path / "x")]) == 1
    assert main(["sweep", "nope"]) == 1


def test_list_scenarios(capsys):
    assert main(["list-scenarios"]) == 0
    out = capsys.readouterr().out
    assert all(name in out for name in SCENARIOS)
