import math
from collections import Counter

import pytest
from hypothesis import given, strategies as st

from eovsim.bench import (RunResult, TraceRecord, compute_metrics, generate_schedule, judge_run,
                          linear_fit, ramp_search, run_benchmark, timeline)
from eovsim.config import BenchConfig, NetworkConfig
from eovsim.flow import COMMITTED


# -- schedules -------------------------------------------------------------------

def test_twenty_clients_at_100():
    plan = generate_schedule(100, 20, 20)
    per = Counter(c for c, _ in plan)
    assert len(plan) == 2000 and set(per.values()) == {100}
    mine = [t for c, t in plan if c == 3]
    assert mine[1] - mine[0] == pytest.approx(0.2)          # 5 tx/s each
    assert plan[1][1] - plan[0][1] == pytest.approx(0.01)


def test_one_client_three_seconds():
    assert generate_schedule(1, 3, ["c"]) == [("c", 0.0), ("c", 1.0), ("c", 2.0)]


def test_bad_schedules():
    with pytest.raises(ValueError):
        generate_schedule(0, 1, 1)
    with pytest.raises(ValueError):
        generate_schedule(1, 1, [])


@given(st.floats(0.5, 3000), st.floats(0.5, 30), st.integers(1, 40))
def test_smooth_uniformity(rate, duration, nclients):
    plan = generate_schedule(rate, duration, nclients)
    assert len(plan) == math.ceil(rate * duration - 1e-9)
    times = [t for _, t in plan]
    for a, b in zip(times, times[1:]):
        assert b - a == pytest.approx(1 / rate, rel=1e-9, abs=1e-12)
    for c in range(min(nclients, 3)):
        mine = [t for cc, t in plan if cc == c]
        for a, b in zip(mine, mine[1:]):
            assert b - a == pytest.approx(nclients / rate, rel=1e-9)


@given(st.floats(1, 2000), st.integers(1, 30), st.integers(0, 10**6))
def test_step_preserves_total(rate, duration, seed):
    smooth = generate_schedule(rate, duration, 4)
    step = generate_schedule(rate, duration, 4, shape="step", seed=seed)
    assert len(step) == len(smooth)
    per_sec = Counter(int(t) for _, t in step)
    assert all(t == int(t) for _, t in step)
    base = rate
    assert all(abs(n - base) <= rate / 2 + 2 for n in list(per_sec.values())[:-1])
    assert step == generate_schedule(rate, duration, 4, shape="step", seed=seed)


# -- metrics ------------------------------------------------------------------------

def test_linear_fit_exact():
    assert linear_fit([0, 1, 2, 3], [1, 3, 5, 7]) == (2.0, 1.0, 1.0)


@given(st.floats(1, 5000), st.integers(20, 400), st.floats(0, 5), st.integers(1, 9))
def test_metrics_on_synthetic_traces(rate, n, latency, every):
    """Exact lines: sends at i/rate, confirmations a fixed latency later, every
    ``every``-th transaction dropped."""
    trace = []
    for i in range(n):
        t = i / rate
        drop = every > 1 and i % every == every - 1
        trace.append(TraceRecord(i, t, None if drop else t + latency, "Failed" if drop else COMMITTED))
    res = compute_metrics(trace, BenchConfig(), rate)
    kept = n - n // every if every > 1 else n
    assert res.measured_send_rate == pytest.approx(rate, rel=1e-9)
    assert res.r2_request == pytest.approx(1.0, rel=1e-9)
    assert res.latency_mean == pytest.approx(latency * 1000, rel=1e-9, abs=1e-9)
    assert res.latency_median == pytest.approx(latency * 1000, rel=1e-9, abs=1e-9)
    assert res.effectivity == pytest.approx(kept / n, rel=1e-12)
    if every == 1:
        assert res.throughput == pytest.approx(rate, rel=1e-9)
        assert res.r2_response == pytest.approx(1.0, rel=1e-9)


def test_judge_thresholds():
    cfg = BenchConfig()
    good = RunResult(100, measured_send_rate=100, throughput=100, effectivity=1.0,
                     r2_response=1.0, latency_mean=500, confirmed=10)
    assert judge_run(good, cfg)
    for field, bad in [("effectivity", 0.79), ("r2_response", 0.89), ("latency_mean", 10001),
                       ("measured_send_rate", 49), ("throughput", 49), ("confirmed", 0)]:
        r = RunResult(**{**good.__dict__, field: bad})
        assert not judge_run(r, cfg), field


def test_empty_trace_rejected():
    with pytest.raises(ValueError):
        compute_metrics([])


# -- ramp search on stubs ------------------------------------------------------------

def stub(capacity, flaky=()):
    """Passes iff rate <= capacity; rates listed in ``flaky`` fail on their first try."""
    tried = Counter()

    def run(rate, seed):
        tried[rate] += 1
        ok = rate <= capacity and not (rate in flaky and tried[rate] == 1)
        return RunResult(rate, measured_send_rate=rate, throughput=min(rate, capacity), success=ok)
    return run


@pytest.mark.parametrize("capacity", [50, 140, 1000])
def test_ramp_localises_stub_capacity(capacity):
    bench = BenchConfig(frequency_bound=20)
    res = ramp_search(stub(capacity), bench)
    m = res.max_rate
    assert res.termination == "converged"
    assert stub(capacity)(m, 0).success
    assert not stub(capacity)(m * (1 + bench.success_step_rate), 0).success
    assert abs(m - capacity) / capacity <= 0.04


@given(st.floats(20, 15000), st.integers(0, 3), st.integers(0, 3), st.integers(0, 3))
def test_ramp_soundness(capacity, loc, reps, ramp_bound):
    bench = BenchConfig(localization_runs=loc, repetition_runs=reps, ramp_bound=ramp_bound,
                        frequency_bound=20)
    res = ramp_search(stub(capacity), bench)
    assert res.max_rate <= capacity
    assert res.max_rate * (1 + bench.success_step_rate) > capacity
    assert res.max_sustainable_throughput == res.max_rate
    assert any(r.target_rate == res.max_rate and r.success for r in res.history)


def test_ramp_terminations():
    assert ramp_search(stub(10), BenchConfig()).termination == "below_start_rate"
    capped = ramp_search(stub(10**6), BenchConfig(max_rate=500))
    assert capped.termination == "max_rate_cap" and capped.max_rate == 500


def test_retry_absorbs_flaky_failure():
    res = ramp_search(stub(1000, flaky={125.0}), BenchConfig())
    assert abs(res.max_rate - 1000) / 1000 <= 0.04


# -- a real run ------------------------------------------------------------------------

def test_low_load_run_and_timeline():
    run = run_benchmark(NetworkConfig(), BenchConfig(duration=6), 50)
    r = run.result
    assert r.success and r.effectivity == 1.0
    assert r.throughput == pytest.approx(50, rel=0.05)
    tl = timeline(run)
    assert sum(row["sends"] for row in tl) == 300
    assert sum(row["confirmations"] for row in tl) == 300
    assert sum(row["block_txs"] for row in tl) == 300
