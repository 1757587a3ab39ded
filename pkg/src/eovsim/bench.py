"""Open-loop benchmark runs, regression metrics and the ramping search."""

from __future__ import annotations

import math
import random
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

from .config import BenchConfig, NetworkConfig
from .costs import CostProfile
from .flow import COMMITTED, FabricNetwork
from .topology import ORDERER, PEER, traffic_report


# -- schedules -----------------------------------------------------------------

def generate_schedule(rate: float, duration: float, clients, workers_per_client: int = 1,
                      shape: str = "smooth", seed: int = 0) -> list[tuple]:
    """Open-loop send plan as ``(client, send_time)`` sorted by time.

    ``clients`` is a list of ids or a count. Smooth: the i-th global send is
    at ``i / rate``, handed round-robin to clients (and their workers).
    Step: every second's quota goes out at the start of that second, with a
    seeded per-second fluctuation of at most ``rate / 2`` that keeps the total.
    """
    if rate <= 0:
        raise ValueError("rate must be > 0")
    if isinstance(clients, int):
        clients = list(range(clients))
    if not clients:
        raise ValueError("need at least one client")
    total = math.ceil(rate * duration - 1e-9)
    nc = len(clients)
    if shape == "smooth":
        return [(clients[i % nc], i / rate) for i in range(total)]
    if shape != "step":
        raise ValueError(f"unknown shape {shape!r}")
    seconds = max(1, math.ceil(duration - 1e-9))
    # even split of the total over whole seconds
    quota = [int(math.floor((s + 1) * rate + 1e-9)) - int(math.floor(s * rate + 1e-9))
             for s in range(seconds)]
    quota[-1] += total - sum(quota)
    rng = random.Random(seed)
    half = int(rate // 2)
    for s in range(0, seconds - 1, 2):
        d = rng.randint(-half, half)
        d = max(-quota[s], min(d, quota[s + 1]))
        quota[s] += d
        quota[s + 1] -= d
    out = []
    i = 0
    for s, q in enumerate(quota):
        for _ in range(q):
            out.append((clients[i % nc], float(s)))
            i += 1
    return out


# -- metrics ---------------------------------------------------------------------

@dataclass(slots=True)
class TraceRecord:
    tx_id: int
    send_time: float
    confirm_time: Optional[float] = None
    status: str = "Pending"


@dataclass
class RunResult:
    target_rate: float
    measured_send_rate: float = 0.0
    throughput: float = 0.0
    latency_mean: float = 0.0
    latency_median: float = 0.0
    latency_p95: float = 0.0
    effectivity: float = 0.0
    r2_request: float = 0.0
    r2_response: float = 0.0
    success: bool = False
    sent: int = 0
    confirmed: int = 0
    seed: int = 0
    cpu: dict = field(default_factory=dict)
    traffic: dict = field(default_factory=dict)

    def row(self) -> dict:
        d = asdict(self)
        cpu = d.pop("cpu")
        traffic = d.pop("traffic")
        for k, v in sorted(cpu.items()):
            d[f"cpu_{k}"] = v
        for k, v in sorted(traffic.items()):
            d[f"upload_{k}"] = v
        return d


def linear_fit(xs, ys) -> tuple[float, float, float]:
    """Ordinary least squares; returns (slope, intercept, r2)."""
    n = len(xs)
    if n < 2:
        return 0.0, (ys[0] if ys else 0.0), 0.0
    mx = math.fsum(xs) / n
    my = math.fsum(ys) / n
    sxx = math.fsum((x - mx) ** 2 for x in xs)
    syy = math.fsum((y - my) ** 2 for y in ys)
    sxy = math.fsum((x - mx) * (y - my) for x, y in zip(xs, ys))
    if sxx == 0:
        return 0.0, my, 0.0
    slope = sxy / sxx
    r2 = 1.0 if syy == 0 else (sxy * sxy) / (sxx * syy)
    return slope, my - slope * mx, r2


def _percentile(sorted_vals, q):
    if not sorted_vals:
        return 0.0
    pos = (len(sorted_vals) - 1) * q
    lo = math.floor(pos)
    hi = min(lo + 1, len(sorted_vals) - 1)
    return sorted_vals[lo] + (sorted_vals[hi] - sorted_vals[lo]) * (pos - lo)


def compute_metrics(trace: list, cfg: Optional[BenchConfig] = None, target_rate: float = 0.0) -> RunResult:
    """Regression metrics over cumulative request and response curves."""
    if not trace:
        raise ValueError("empty trace")
    sends = sorted(r.send_time for r in trace)
    req_x = sends
    req_y = list(range(1, len(sends) + 1))
    send_rate, _, r2_req = linear_fit(req_x, req_y)
    ok = [r for r in trace if r.confirm_time is not None and r.status == COMMITTED]
    res = RunResult(target_rate, measured_send_rate=send_rate, r2_request=r2_req,
                    sent=len(trace), confirmed=len(ok))
    res.effectivity = len(ok) / len(trace)
    if not ok:
        res.success = False
        return res
    conf = sorted(r.confirm_time for r in ok)
    res.throughput, _, res.r2_response = linear_fit(conf, list(range(1, len(conf) + 1)))
    lats = sorted((r.confirm_time - r.send_time) * 1000.0 for r in ok)
    res.latency_mean = math.fsum(lats) / len(lats)
    res.latency_median = _percentile(lats, 0.5)
    res.latency_p95 = _percentile(lats, 0.95)
    if cfg is not None:
        res.success = judge_run(res, cfg)
    return res


def judge_run(result: RunResult, cfg: BenchConfig) -> bool:
    target = result.target_rate
    return (result.confirmed > 0
            and result.effectivity >= cfg.success_bound
            and result.r2_response >= cfg.r2_bound
            and result.latency_mean <= cfg.latency_bound
            and result.measured_send_rate >= (1 - cfg.delta_send) * target
            and result.throughput >= (1 - cfg.delta_receive) * target)


# -- single runs -----------------------------------------------------------------

@dataclass
class CrashPlan:
    role: str           # leader | follower | peer | client | explicit node id
    t: float

    def node(self, network: FabricNetwork) -> str:
        topo = network.topo
        if self.role == "leader":
            return network.ordering.leader
        if self.role == "follower":
            others = [o for o in topo.orderers if o != network.ordering.leader]
            if not others:
                raise ValueError("no follower orderer to crash")
            return others[0]
        if self.role == "peer":
            peers = topo.peers_by_org[0]
            return peers[1] if len(peers) > 1 else peers[0]
        if self.role == "client":
            return topo.clients[0]
        return self.role


@dataclass
class BenchRun:
    result: RunResult
    network: FabricNetwork
    end_time: float

    def trace(self) -> list[TraceRecord]:
        return trace_of(self.network, self.end_time)


def trace_of(network: FabricNetwork, end_time: float) -> list[TraceRecord]:
    out = []
    for tx in network.txs:
        ok = tx.status == COMMITTED and tx.confirmed is not None and tx.confirmed <= end_time
        out.append(TraceRecord(tx.tx_id, tx.requested, tx.confirmed if ok else None,
                               COMMITTED if ok else ("Failed" if tx.status == "Failed" else "Pending")))
    return out


def run_benchmark(net: NetworkConfig, bench: BenchConfig, rate: float, seed: int = 0,
                  costs: Optional[CostProfile] = None, matrix=None,
                  crash: Optional[CrashPlan] = None, keep_log: bool = False) -> BenchRun:
    """One open-loop run at ``rate`` tx/s, judged against ``bench``."""
    network = FabricNetwork(net, bench, costs, seed=seed, matrix=matrix, keep_log=keep_log)
    plan = generate_schedule(rate, bench.duration, network.topo.clients,
                             bench.workers_per_client, bench.shape, seed)
    for client, t in plan:
        network.submit(client, t)
    if crash is not None:
        network.crash(crash.node(network), crash.t)
    last = plan[-1][1] if plan else 0.0
    end = last + bench.delta_max_time
    network.run(end)
    result = compute_metrics(trace_of(network, end), bench, rate) if plan else RunResult(rate)
    result.seed = seed
    lo, hi = _steady_window(bench.duration)
    stats = resource_stats(network, (lo, hi))
    result.cpu = stats["summary"]
    report = traffic_report(network.topo, network.ordering.leader, (lo, hi))
    result.traffic = {role: round(v["mean_max_upload_mbps"], 6) for role, v in report["roles"].items()}
    return BenchRun(result, network, end)


def _steady_window(duration):
    lo = int(min(2, duration // 4))
    hi = max(lo + 1, int(duration) - 1)
    return lo, hi


def resource_stats(network: FabricNetwork, window) -> dict:
    """CPU utilisation per node per second in ``window`` plus role summaries."""
    lo, hi = window
    nodes = {}
    for nid, pool in network.cpu.items():
        series = pool.utilization(lo, hi)
        nodes[nid] = {
            "role": network.topo.nodes[nid].role,
            "series": series,
            "mean": sum(series) / len(series) if series else 0.0,
            "max_core": pool.max_core_utilization(lo, hi),
        }
    commit = {}
    for peer, pools in network.store.items():
        series = [sum(v) / len(pools) for v in zip(*(p.utilization(lo, hi) for p in pools))]
        commit[peer] = sum(series) / len(series) if series else 0.0
    summary = {}
    for role in ("peer", "orderer", "client"):
        vals = [v["mean"] for v in nodes.values() if v["role"] == role]
        summary[role] = round(sum(vals) / len(vals), 6) if vals else 0.0
    summary["commit"] = round(sum(commit.values()) / len(commit), 6) if commit else 0.0
    return {"nodes": nodes, "commit": commit, "summary": summary}


def timeline(run: BenchRun) -> list[dict]:
    """Per-second sends, confirmations and committed blocks."""
    end = int(math.ceil(run.end_time))
    sends = [0] * (end + 1)
    confs = [0] * (end + 1)
    blocks = [0] * (end + 1)
    btx = [0] * (end + 1)
    for tx in run.network.txs:
        sends[min(end, int(tx.requested))] += 1
        if tx.status == COMMITTED and tx.confirmed is not None and tx.confirmed <= run.end_time:
            confs[min(end, int(tx.confirmed))] += 1
    for b in run.network.ordering.blocks:
        if b.committed_at is not None and b.committed_at <= run.end_time:
            s = min(end, int(b.committed_at))
            blocks[s] += 1
            btx[s] += len(b.txs)
    return [{"second": s, "sends": sends[s], "confirmations": confs[s], "blocks": blocks[s],
             "block_txs": btx[s]} for s in range(end + 1)]


# -- ramping search --------------------------------------------------------------

@dataclass
class RampResult:
    max_sustainable_throughput: float
    max_rate: float
    termination: str
    history: list = field(default_factory=list)

    def summary(self) -> dict:
        return {
            "max_sustainable_throughput": self.max_sustainable_throughput,
            "max_rate": self.max_rate,
            "termination": self.termination,
            "runs": [r.row() for r in self.history],
        }


Runner = Callable[[float, int], RunResult]


def ramp_search(runner: Runner, bench: BenchConfig, seed: int = 0) -> RampResult:
    """Localise the highest rate whose run passes every success criterion.

    Ascent: start at ``frequency_bound`` and multiply by
    ``1 / success_base_rate`` after each success. A failed run is retried up
    to ``retry_limit`` times before it counts; after the first counted
    failure up to ``ramp_bound`` further ascending probes check that the
    boundary is real. Localisation (``localization_runs`` passes) bisects the
    last-success / first-failure interval until its relative width is at
    most ``success_step_rate``; later passes re-test both ends and fall back
    by ``success_base_rate`` / ``failure_base_rate`` when they flip.
    Confirmation runs ``repetition_runs`` more times at the final rate; a
    failure there reopens bisection below it.
    """
    history: list[RunResult] = []
    counter = [0]
    cap = bench.max_rate

    def attempt(rate) -> tuple[bool, RunResult]:
        last = None
        for _ in range(bench.retry_limit + 1):
            counter[0] += 1
            res = runner(rate, seed + counter[0] - 1)
            history.append(res)
            if res.success:
                return True, res
            last = res
        return False, last

    def single(rate) -> tuple[bool, RunResult]:
        counter[0] += 1
        res = runner(rate, seed + counter[0] - 1)
        history.append(res)
        return res.success, res

    rate = min(bench.frequency_bound, cap)
    best: Optional[tuple[float, RunResult]] = None
    upper: Optional[float] = None
    # phase A: coarse ascent
    while True:
        ok, res = attempt(rate)
        if ok:
            best = (rate, res)
            if rate >= cap:
                return RampResult(res.throughput, rate, "max_rate_cap", history)
            rate = min(rate / bench.success_base_rate, cap)
            continue
        if best is None:
            return RampResult(0.0, 0.0, "below_start_rate", history)
        upper = rate
        probe = rate
        resumed = False
        for _ in range(bench.ramp_bound):
            probe = min(probe / bench.success_base_rate, cap)
            ok, res = single(probe)
            if ok:
                best = (probe, res)
                resumed = True
                break
            if probe >= cap:
                break
        if resumed:
            if probe >= cap:
                return RampResult(res.throughput, probe, "max_rate_cap", history)
            rate = probe / bench.success_base_rate
            rate = min(rate, cap)
            continue
        break

    successes = {best[0]: best[1]}

    def bisect(lo, hi):
        nonlocal best
        while (hi - lo) / lo > bench.success_step_rate:
            mid = (lo + hi) / 2
            ok, res = single(mid)
            if ok:
                lo = mid
                best = (mid, res)
                successes[mid] = res
            else:
                hi = mid
        return lo, hi

    lo, hi = best[0], upper
    # phase B: localisation passes
    for p in range(max(1, bench.localization_runs)):
        if p > 0:
            ok_lo, res_lo = single(lo)
            if not ok_lo:
                hi = lo
                lo = lo * bench.success_base_rate
                ok2, res2 = attempt(lo)
                while not ok2:
                    hi = lo
                    lo *= bench.success_base_rate
                    if lo < bench.frequency_bound * bench.success_base_rate ** 8:
                        return RampResult(0.0, 0.0, "below_start_rate", history)
                    ok2, res2 = attempt(lo)
                best = (lo, res2)
                successes[lo] = res2
            else:
                best = (lo, res_lo)
                ok_hi, res_hi = single(hi)
                if ok_hi:
                    lo, best = hi, (hi, res_hi)
                    successes[hi] = res_hi
                    hi = hi / bench.failure_base_rate
                    while hi < cap:
                        ok3, res3 = single(hi)
                        if not ok3:
                            break
                        lo, best = hi, (hi, res3)
                        hi = hi / bench.failure_base_rate
        lo, hi = bisect(lo, hi)

    # phase C: confirmation at the final rate
    reps = 0
    while reps < bench.repetition_runs:
        ok, res = single(lo)
        if ok:
            reps += 1
            best = (lo, res)
            continue
        hi = lo
        lower = [r for r in successes if r < lo]
        lo = max(lower) if lower else lo * bench.success_base_rate
        if lo < 1e-9:
            return RampResult(0.0, 0.0, "below_start_rate", history)
        ok, res = single(lo)
        if not ok:
            successes.pop(lo, None)
            continue
        best = (lo, res)
        successes[lo] = res
        lo, hi = bisect(lo, hi)
        reps = 0
    return RampResult(best[1].throughput, best[0], "converged", history)


def network_runner(net: NetworkConfig, bench: BenchConfig, costs=None, matrix=None,
                   crash: Optional[CrashPlan] = None) -> Runner:
    cache = {}

    def run(rate, seed):
        # smooth schedules without crashes ignore the seed, so retries repeat
        key = (rate, seed if bench.shape == "step" else None)
        if key not in cache:
            cache[key] = run_benchmark(net, bench, rate, seed, costs, matrix, crash).result
        return cache[key]
    return run


def ramp(net: NetworkConfig, bench: BenchConfig, seed: int = 0, costs=None, matrix=None) -> RampResult:
    return ramp_search(network_runner(net, bench, costs, matrix), bench, seed)
