import json

import pytest
from hypothesis import given, strategies as st

from eovsim.config import ConfigError
from eovsim.costs import DEFAULT_PROFILE, CostProfile, Pool, UnsupportedQuery, WorkloadSpec
from eovsim.engine import Simulator


def test_read_service_table():
    p = DEFAULT_PROFILE
    assert p.read_throughput("CouchDB") == pytest.approx(400)
    assert p.read_throughput("LevelDB") == pytest.approx(750)
    assert p.read_throughput("CouchDB", "complex_indexed") == pytest.approx(150)
    assert p.read_throughput("CouchDB", "complex_unindexed") == pytest.approx(2.5)
    with pytest.raises(UnsupportedQuery):
        p.read_service("LevelDB", "complex_indexed")


def test_matmul_is_cubic():
    p = DEFAULT_PROFILE
    cost = [p.exec_cost(WorkloadSpec("matmul", n=n), "CouchDB") - p.exec_base for n in (100, 200)]
    assert cost[1] / cost[0] == pytest.approx(8)
    assert WorkloadSpec("matmul").writes == 0


def test_payload_origin():
    p = DEFAULT_PROFILE
    client = p.exec_cost(WorkloadSpec(payload_bytes=100_000), "CouchDB")
    peer = p.exec_cost(WorkloadSpec(payload_bytes=100_000, data_origin="peer"), "CouchDB")
    assert client > peer
    assert p.tx_wire_size(1000, 2, tls=True) == 2 * p.cert_bytes + p.tx_overhead_bytes + 1000 + p.tls_overhead_bytes
    assert p.tx_wire_size(1000, 2, tls=False, with_payload=False) == 2 * p.cert_bytes + p.tx_overhead_bytes


def test_commit_writes():
    p = DEFAULT_PROFILE
    assert p.commit_writes(WorkloadSpec(), private=True, authorized=True) == 2
    assert p.commit_writes(WorkloadSpec(), private=True, authorized=False) == 1
    assert p.commit_cost("LevelDB") == p.db_write_service["LevelDB"]
    assert p.write_service("CouchDB", external=True) < p.write_service("CouchDB")


@given(st.integers(1, 8), st.integers(1, 8))
def test_validation_grows_with_endorsements(a, b):
    p = DEFAULT_PROFILE
    if a < b:
        assert p.validation_cost(a) < p.validation_cost(b)


def test_profile_load(tmp_path):
    f = tmp_path / "c.json"
    f.write_text(json.dumps({"exec_base": 0.002, "db_write_service": {"LevelDB": 0.001}}))
    p = CostProfile.load(f)
    assert p.exec_base == 0.002
    assert p.db_write_service == {"LevelDB": 0.001, "CouchDB": DEFAULT_PROFILE.db_write_service["CouchDB"]}
    f.write_text(json.dumps({"nonsense": 1}))
    with pytest.raises(ConfigError):
        CostProfile.load(f)
    f.write_text(json.dumps({"exec_base": -1}))
    with pytest.raises(ConfigError):
        CostProfile.load(f)


def test_pool_priority_and_utilisation():
    sim = Simulator()
    pool = Pool(sim, "p", 1)
    done = []
    pool.submit(1.0, done.append, ("first",))
    pool.submit(1.0, done.append, ("low",), priority=1)
    pool.submit(1.0, done.append, ("high",), priority=0)
    sim.run()
    assert done == ["first", "high", "low"]
    assert pool.utilization(0, 3) == [1.0, 1.0, 1.0]


@given(st.integers(1, 4), st.lists(st.floats(0.001, 2), min_size=1, max_size=30))
def test_pool_work_conserving(width, jobs):
    sim = Simulator()
    pool = Pool(sim, "p", width)
    for d in jobs:
        pool.submit(d)
    sim.run()
    horizon = int(sim.now) + 2
    busy = sum(pool.utilization(0, horizon)) * width
    assert busy == pytest.approx(sum(jobs))
    # never idle while work waits: makespan bounded by greedy list scheduling
    assert sim.now <= sum(jobs) / width + max(jobs) + 1e-9
