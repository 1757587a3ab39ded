import pytest
from hypothesis import given, strategies as st

from eovsim.engine import EventKind, SchedulingError, Simulator, UnknownNodeError


def test_empty_queue_advances_clock():
    sim = Simulator()
    log = sim.run_until(10)
    assert len(log) == 0
    assert sim.now == 10


def test_single_event():
    sim = Simulator()
    sim.schedule(3, EventKind.TIMER, "a")
    assert len(sim.run_until(10)) == 1


def test_same_time_event_runs_next():
    sim = Simulator()
    seen = []
    sim.schedule(0.0, EventKind.TIMER, "a", seen.append, ("x",))
    sim.run_until(0.0)
    assert seen == ["x"]


def test_ties_break_by_insertion():
    sim = Simulator()
    a = sim.schedule(5.0, EventKind.TIMER, "a")
    b = sim.schedule(5.0, EventKind.TIMER, "b")
    log = sim.run_until(5.0)
    assert [r.seq for r in log] == [a.seq, b.seq]
    assert a.seq < b.seq


def test_heap_order():
    sim = Simulator()
    sim.schedule(1.0, EventKind.TIMER, "late")
    sim.schedule(0.5, EventKind.TIMER, "early")
    assert [r.node for r in sim.run_until(2)] == ["early", "late"]


def test_chain_of_successors():
    sim = Simulator()

    def tick():
        sim.after(1.0, EventKind.TIMER, "n", tick)

    sim.after(1.0, EventKind.TIMER, "n", tick)
    assert len(sim.run_until(5)) == 5
    assert sim.now == 5


def test_past_scheduling_rejected():
    sim = Simulator()
    sim.run_until(2)
    with pytest.raises(SchedulingError):
        sim.schedule(1.0, EventKind.TIMER)
    with pytest.raises(SchedulingError):
        sim.run_until(1.0)


def test_unknown_crash_node():
    sim = Simulator(nodes=["a"])
    with pytest.raises(UnknownNodeError):
        sim.schedule_crash("b", 1.0)
    with pytest.raises(ValueError):
        sim.schedule_crash("a", -1)


def test_crashed_node_neither_runs_nor_sends():
    sim = Simulator()
    ran = []
    sim.schedule_crash("a", 1.0)
    sim.schedule(2.0, EventKind.CLIENT_SEND, "a", ran.append, ("own",))
    sim.schedule(2.0, EventKind.MESSAGE, "b", ran.append, ("from a",), src="a")
    sim.schedule(2.0, EventKind.MESSAGE, "b", ran.append, ("from c",), src="c")
    sim.run_until(3)
    assert ran == ["from c"]
    assert sim.crashed_at("a") == 1.0 and not sim.alive("a")


def test_rng_is_per_node_and_seeded():
    a = [Simulator(7).rng("p0.0").random() for _ in range(2)]
    assert a[0] == a[1]
    sim = Simulator(7)
    assert sim.rng("p0.0").random() != sim.rng("p0.1").random()
    assert Simulator(8).rng("p0.0").random() != a[0]


def test_trace_dump(tmp_path):
    sim = Simulator()
    sim.schedule(1.5, EventKind.TIMER, "a", detail="x")
    sim.run()
    sim.log.dump(tmp_path / "ev.csv")
    assert (tmp_path / "ev.csv").read_text() == "time,seq,kind,node,detail\n1.5,0,timer,a,x\n"


# -- properties ---------------------------------------------------------------

plans = st.lists(
    st.tuples(st.floats(0, 100, allow_nan=False), st.integers(0, 3),
              st.lists(st.floats(0, 5, allow_nan=False), max_size=3)),
    min_size=1, max_size=30)


def _play(plan, seed=0, crashes=()):
    """Each planned event spawns children at the given offsets."""
    sim = Simulator(seed)
    parent_time = {}

    def fire(node, children):
        for dt in children:
            ev = sim.after(dt, EventKind.MESSAGE, (node + 1) % 4, fire, ((node + 1) % 4, []), src=node)
            parent_time[ev.seq] = sim.now

    for t, node, children in plan:
        sim.schedule(t, EventKind.MESSAGE, node, fire, (node, children))
    for node, t in crashes:
        sim.schedule_crash(node, t)
    sim.run()
    return sim, parent_time


@given(plans)
def test_dispatch_order_and_clock_monotone(plan):
    sim, _ = _play(plan)
    keys = [(r.time, r.seq) for r in sim.log]
    assert keys == sorted(keys)
    assert len({r.seq for r in sim.log}) == len(sim.log)


@given(plans, st.integers(0, 2**64 - 1))
def test_determinism(plan, seed):
    a, _ = _play(plan, seed)
    b, _ = _play(plan, seed)
    assert a.log.digest() == b.log.digest()


@given(plans)
def test_causality(plan):
    sim, parent = _play(plan)
    for r in sim.log:
        if r.seq in parent:
            assert r.time >= parent[r.seq]


@given(plans, st.lists(st.tuples(st.integers(0, 3), st.floats(0, 100, allow_nan=False)), max_size=3))
def test_crash_absorption(plan, crashes):
    sim, _ = _play(plan, crashes=crashes)
    for r in sim.log:
        for node in (r.node, r.src):
            t = sim.crashed_at(node)
            if t is not None and r.time > t and r.kind != "crash":
                assert r.dropped
