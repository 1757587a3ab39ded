"""Named parameter sweeps and their execution.

A sweep axis is ``(path, values)`` where path is ``network.<key>``,
``bench.<key>`` or ``crash.role``. Points are the cartesian product of the
axes, visited in row-major order.
"""

from __future__ import annotations

import dataclasses
import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

from . import __version__
from .bench import CrashPlan, network_runner, ramp_search, run_benchmark
from .config import BenchConfig, ConfigError, NetworkConfig, bench_from_dict, network_from_dict, to_dict
from .costs import CostProfile
from .export import config_hash, write_csv, write_json


@dataclass
class Scenario:
    name: str
    description: str = ""
    network: dict = field(default_factory=dict)
    bench: dict = field(default_factory=dict)
    axes: list = field(default_factory=list)
    mode: str = "ramp"                  # ramp | run
    rate: Optional[float] = None        # run mode only; defaults to frequency_bound
    crash: Optional[tuple] = None       # (role, t)

    def validate(self) -> "Scenario":
        if self.mode not in ("ramp", "run"):
            raise ConfigError("mode must be ramp or run", f"{self.name}.mode")
        net_keys = {f.name for f in dataclasses.fields(NetworkConfig)}
        bench_keys = {f.name for f in dataclasses.fields(BenchConfig)}
        for path, values in self.axes:
            section, _, key = path.partition(".")
            ok = ((section == "network" and key in net_keys)
                  or (section == "bench" and key in bench_keys)
                  or path == "crash.role")
            if not ok:
                raise ConfigError("sweep axis does not name a config key", path)
            if not values:
                raise ConfigError("sweep axis has no values", path)
        if any(path == "crash.role" for path, _ in self.axes) and self.crash is None:
            raise ConfigError("crash.role axis needs a crash time", f"{self.name}.crash")
        # every point must resolve to a valid configuration
        for point in self.points():
            self.resolve(point)
        return self

    @property
    def size(self) -> int:
        n = 1
        for _, values in self.axes:
            n *= len(values)
        return n

    def points(self) -> list[dict]:
        if not self.axes:
            return [{}]
        paths = [p for p, _ in self.axes]
        return [dict(zip(paths, combo)) for combo in itertools.product(*(v for _, v in self.axes))]

    def resolve(self, point: dict):
        """(NetworkConfig, BenchConfig, CrashPlan or None) for one sweep point."""
        net = dict(self.network)
        bench = dict(self.bench)
        crash = list(self.crash) if self.crash else None
        for path, value in point.items():
            section, _, key = path.partition(".")
            if section == "network":
                net[key] = value
            elif section == "bench":
                bench[key] = value
            else:
                crash[0] = value
        plan = CrashPlan(crash[0], float(crash[1])) if crash else None
        return network_from_dict(net), bench_from_dict(bench), plan

    def with_overrides(self, overrides: dict) -> "Scenario":
        """Copy with ``section.key`` overrides applied to the base configs."""
        net, bench = dict(self.network), dict(self.bench)
        rate = self.rate
        for path, value in overrides.items():
            section, _, key = path.partition(".")
            if section == "network":
                net[key] = value
            elif section == "bench":
                bench[key] = value
            elif path == "rate":
                rate = float(value)
            else:
                raise ConfigError("override must start with network. or bench.", path)
        return dataclasses.replace(self, network=net, bench=bench, rate=rate).validate()


def _builtin() -> dict:
    s = [
        Scenario(
            "endorsement", "endorsement policy OutOf(k, 4) for both databases",
            axes=[("network.database", ["LevelDB", "CouchDB"]),
                  ("network.endorsement", ["OutOf(1, 4)", "OutOf(2, 4)", "OutOf(4, 4)"])]),
        Scenario(
            "hardware", "peer hardware profile, public and private transactions",
            axes=[("network.node_type", ["m5.large", "m5.xlarge", "m5.2xlarge", "m5.4xlarge"]),
                  ("bench.mode", ["public", "private"])]),
        Scenario(
            "blocks", "block timeout and message count at 500 tx/s",
            mode="run", rate=500.0,
            axes=[("network.batch_timeout", [0.1, 0.25, 0.5, 1.0, 2.0]),
                  ("network.max_message_count", [10, 50, 100, 250, 1000])]),
        Scenario(
            "payload", "payload size, supplied by the client or generated on the peer",
            bench={"frequency_bound": 10},
            axes=[("bench.payload_bytes", [10, 1000, 10000, 100000]),
                  ("bench.data_origin", ["client", "peer"])]),
        Scenario(
            "placement", "datacenter placement for both modes and databases",
            axes=[("network.placement", ["single-dc", "europe", "intercontinental"]),
                  ("bench.mode", ["public", "private"]),
                  ("network.database", ["CouchDB", "LevelDB"])]),
        Scenario(
            "crashes", "crash one node at t=30 under 400 tx/s",
            bench={"duration": 60}, mode="run", rate=400.0, crash=("leader", 30.0),
            axes=[("crash.role", ["leader", "follower", "peer"])]),
        Scenario(
            "database", "LevelDB against CouchDB on the default network",
            axes=[("network.database", ["LevelDB", "CouchDB"])]),
        Scenario(
            "orderer-scaling", "RAFT cluster size with the ramp capped at 1500 tx/s",
            bench={"max_rate": 1500}, network={"database": "LevelDB", "node_type": "m5.xlarge"},
            axes=[("network.orderer_count", [4, 8, 16, 32, 64])]),
    ]
    return {x.name: x for x in s}


SCENARIOS = _builtin()


def get_scenario(name: str) -> Scenario:
    try:
        return SCENARIOS[name]
    except KeyError:
        raise ConfigError(f"unknown scenario {name!r}; try list-scenarios", "scenario") from None


@dataclass
class ResultSet:
    scenario: str
    seed: int
    version: str = __version__
    rows: list = field(default_factory=list)

    def summary(self) -> dict:
        return {"scenario": self.scenario, "seed": self.seed, "version": self.version,
                "rows": self.rows}


def _point_key(point: dict) -> str:
    return ",".join(f"{k}={v}" for k, v in point.items()) or "base"


def run_point(scenario: Scenario, point: dict, seed: int = 0, costs: Optional[CostProfile] = None,
              matrix=None) -> dict:
    """Execute one sweep point and return a flat row."""
    net, bench, crash = scenario.resolve(point)
    row = dict(point)
    row["config_hash"] = config_hash(to_dict(net), to_dict(bench),
                                     [crash.role, crash.t] if crash else None)
    if scenario.mode == "ramp":
        r = ramp_search(network_runner(net, bench, costs, matrix, crash), bench, seed)
        row.update(kind="ramp", max_sustainable_throughput=r.max_sustainable_throughput,
                   max_rate=r.max_rate, termination=r.termination, runs=len(r.history))
        row["_detail"] = r
    else:
        rate = scenario.rate or bench.frequency_bound
        run = run_benchmark(net, bench, rate, seed, costs, matrix, crash)
        res = run.result
        row.update(kind="run", target_rate=rate, throughput=res.throughput,
                   latency_mean=res.latency_mean, effectivity=res.effectivity,
                   success=res.success, sent=res.sent, confirmed=res.confirmed)
        if crash is not None:
            row["crashed"] = crash.node(run.network) if crash.role in ("follower", "peer", "client") \
                else crash.role
        row["_detail"] = run
    return row


def run_scenario(scenario: Scenario, seed: int = 0, out_dir=None, costs=None, matrix=None,
                 log: Callable[[str], None] = print) -> ResultSet:
    """Run every point; with ``out_dir`` the results file is rewritten after each point."""
    scenario.validate()
    points = scenario.points()
    log(f"{scenario.name}: {len(points)} point(s)")
    rs = ResultSet(scenario.name, seed)
    out = Path(out_dir) if out_dir else None
    for i, point in enumerate(points):
        try:
            row = run_point(scenario, point, seed, costs, matrix)
        except Exception as exc:        # noqa: BLE001 - recorded, the sweep goes on
            row = dict(point, kind="error", error=str(exc))
        detail = row.pop("_detail", None)
        if out is not None and detail is not None:
            _export_detail(out / f"point_{i:03d}", detail)
        rs.rows.append(row)
        log(f"  [{i + 1}/{len(points)}] {_point_key(point)}: "
            + (f"{row.get('max_sustainable_throughput', row.get('throughput')):.1f} tx/s"
               if row["kind"] != "error" else f"error: {row['error']}"))
        if out is not None:
            export_results(rs, scenario, out)
    return rs


def _export_detail(out: Path, detail):
    from .export import export_ramp, export_run

    if hasattr(detail, "history"):
        export_ramp(detail, out)
    else:
        export_run(detail, out, "run")


def export_results(rs: ResultSet, scenario: Scenario, out_dir) -> list[Path]:
    """results.csv, one table per sweep axis, and summary.json."""
    if not rs.rows:
        raise ValueError("empty result set: nothing to export")
    out = Path(out_dir)
    paths = [write_csv(out / "results.csv", rs.rows)]
    metric = "max_sustainable_throughput" if scenario.mode == "ramp" else "throughput"
    for path, _ in scenario.axes:
        others = [p for p, _ in scenario.axes if p != path]
        rows = sorted(rs.rows, key=lambda r: [str(r.get(p)) for p in others])
        table = [{path: r.get(path), **{p: r.get(p) for p in others}, metric: r.get(metric)}
                 for r in rows]
        paths.append(write_csv(out / f"axis_{path.replace('.', '_')}.csv", table))
    paths.append(write_json(out / "summary.json", rs.summary()))
    return paths


def describe(scenario: Scenario) -> str:
    axes = "; ".join(f"{p} in {json.dumps(v)}" for p, v in scenario.axes)
    extra = f" at {scenario.rate:g} tx/s" if scenario.rate else ""
    return f"{scenario.name} [{scenario.mode}{extra}, {scenario.size} points] {scenario.description}: {axes}"
