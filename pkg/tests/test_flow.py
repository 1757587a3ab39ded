import pytest
from hypothesis import given, settings, strategies as st

from eovsim.bench import CrashPlan, run_benchmark
from eovsim.config import BenchConfig, ConfigError, NetworkConfig
from eovsim.costs import UnsupportedQuery
from eovsim.flow import COMMITTED, FAILED, FabricNetwork, critical_path_legs

SMALL = BenchConfig(duration=4, delta_max_time=5)


def test_leg_counts():
    solo = NetworkConfig(org_count=1, peer_count=1, orderer_count=1, client_count=1,
                         orderer_type="Solo", endorsement="OutOf(1, 1)")
    assert critical_path_legs(solo) == 5
    # 3 of 4 orgs need the follower commit notice; 3 of 4 clients use a non-anchor peer
    assert critical_path_legs(NetworkConfig()) == 8.75
    assert critical_path_legs(NetworkConfig(), "private") == 10.75


def _lone_tx(net, bench=SMALL, delay=0.0):
    bench = BenchConfig(**{**bench.__dict__, "delay": delay})
    fn = FabricNetwork(net, bench)
    tx = fn.submit(fn.topo.clients[0], 0.0)
    fn.run(10)
    return fn, tx


def test_single_public_tx_lifecycle():
    fn, tx = _lone_tx(NetworkConfig())
    assert tx.status == COMMITTED
    assert tx.requested < tx.endorsed < tx.ordered <= tx.first_commit < tx.confirmed
    assert tx.commits == 8                       # every peer commits it
    assert len(tx.endorsers) == 2
    assert {fn.topo.nodes[p].org for p in tx.endorsers} == {0, 1}


def test_added_delay_shifts_latency_by_leg_count():
    cfg = NetworkConfig(org_count=1, peer_count=1, orderer_count=1, client_count=1,
                        orderer_type="Solo", endorsement="OutOf(1, 1)")
    _, a = _lone_tx(cfg)
    _, b = _lone_tx(cfg, delay=10)
    assert (b.confirmed - b.requested) - (a.confirmed - a.requested) == pytest.approx(0.05)


def test_private_payload_stays_in_collection():
    fn = FabricNetwork(NetworkConfig(), BenchConfig(mode="private", duration=2))
    txs = [fn.submit(c, 0.01 * i) for i, c in enumerate(fn.topo.clients)]
    fn.run(10)
    assert all(t.status == COMMITTED for t in txs)
    for peer in fn.ledgers:
        org = fn.topo.nodes[peer].org
        mine = sum(1 for t in txs if org in t.collection)
        assert fn.private_store[peer] == mine
        assert fn.hash_store[peer] == len(txs)
        # payloads only ever reached authorised peers
        assert all(org in txs[i].collection for i in fn.transient[peer])


def test_private_requires_enough_orgs():
    with pytest.raises(ConfigError):
        FabricNetwork(NetworkConfig(endorsement="OutOf(3, 4)"), BenchConfig(mode="private"))


def test_unsupported_query():
    with pytest.raises(UnsupportedQuery):
        FabricNetwork(NetworkConfig(database="LevelDB"),
                      BenchConfig(method="readData", query="complex_indexed"))


def test_read_throughput_scales_with_peers():
    def tput(peers):
        net = NetworkConfig(database="CouchDB", peer_count=peers, org_count=1,
                            endorsement="OutOf(1, 1)", orderer_count=1, orderer_type="Solo")
        return run_benchmark(net, BenchConfig(method="readData", duration=10), 2000).result.throughput
    one, two = tput(1), tput(2)
    assert one == pytest.approx(400, rel=0.03)
    assert two == pytest.approx(2 * one, rel=0.03)


def test_crashed_endorser_times_out():
    run = run_benchmark(NetworkConfig(), BenchConfig(duration=10), 100, crash=CrashPlan("p1.0", 5.0))
    failed = [t for t in run.network.txs if t.status == FAILED]
    assert failed and all(t.reason == "endorsement_timeout" for t in failed)
    assert all(t.requested >= 5.0 - 0.01 for t in failed)
    assert all("p1.0" in run.network.topo.endorsers[t.client] for t in failed)


def test_failover_mode_recovers():
    net = NetworkConfig(endorser_mode="failover")
    run = run_benchmark(net, BenchConfig(duration=10), 100, crash=CrashPlan("p1.0", 5.0))
    # proposals already in flight when the peer died are lost
    assert all(t.status == COMMITTED for t in run.network.txs if t.requested > 5.0)
    late = [t for t in run.network.txs if t.requested > 5.0 and t.client.startswith("c1.")]
    assert late and all("p1.0" not in t.endorsers for t in late)


def test_anchor_crash_hands_over_delivery():
    run = run_benchmark(NetworkConfig(), BenchConfig(duration=10), 100, crash=CrashPlan("p1.0", 5.0))
    assert run.network.topo.anchors[1] == "p1.1"
    led = run.network.ledgers["p1.1"][0]
    assert led.heights == list(range(1, len(run.network.ordering.blocks) + 1))


def test_crashed_client_sends_nothing():
    run = run_benchmark(NetworkConfig(), BenchConfig(duration=6), 64, crash=CrashPlan("client", 3.0))
    late = [t for t in run.network.txs if t.client == "c0.0" and t.requested > 3.0]
    assert late and all(t.endorsed is None for t in late)


@settings(max_examples=8)
@given(st.integers(0, 2**32), st.sampled_from(["public", "private"]))
def test_runs_are_deterministic(seed, mode):
    bench = BenchConfig(duration=2, mode=mode, shape="step")
    a = FabricNetwork(NetworkConfig(), bench, seed=seed, keep_log=True)
    b = FabricNetwork(NetworkConfig(), bench, seed=seed, keep_log=True)
    for fn in (a, b):
        for i, c in enumerate(fn.topo.clients):
            fn.submit(c, i * 0.05)
        fn.run(8)
    assert a.sim.log.digest() == b.sim.log.digest()
