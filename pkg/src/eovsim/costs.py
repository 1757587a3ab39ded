"""Service times, message sizes and per-node resources.

The default profile is frozen: its constants were fitted once against a
handful of reference measurements (see ``scripts/calibrate.py``) and every
test runs against it unchanged.
"""

from __future__ import annotations

import dataclasses
import heapq
import json
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

from .config import ConfigError
from .engine import EventKind, Simulator


class UnsupportedQuery(ValueError):
    pass


@dataclass(frozen=True)
class WorkloadSpec:
    kind: str = "write"                 # write | read | matmul
    payload_bytes: int = 10
    data_origin: str = "client"
    query: str = "simple"
    n: int = 1
    keyspace_size: int = 10_000

    def __post_init__(self):
        if self.payload_bytes < 0:
            raise ValueError("payload_bytes must be >= 0")
        if self.n < 1:
            raise ValueError("matrix size must be >= 1")
        if self.kind not in ("write", "read", "matmul"):
            raise ValueError(f"unknown workload kind {self.kind!r}")

    @classmethod
    def from_bench(cls, bench) -> "WorkloadSpec":
        kind = {"writeData": "write", "readData": "read", "matrixMultiplication": "matmul"}[bench.method]
        return cls(kind, bench.payload_bytes, bench.data_origin, bench.query, bench.matrix_size)

    @property
    def writes(self) -> int:
        """State writes per transaction; matrix products touch no state."""
        return 0 if self.kind == "matmul" else 1


@dataclass
class CostProfile:
    # storage: seconds per state write / per read query, by database
    db_write_service: dict = field(default_factory=lambda: {"LevelDB": 0.0002, "CouchDB": 0.002})
    db_read_service: dict = field(default_factory=lambda: {
        "LevelDB": {"simple": 1 / 750},
        "CouchDB": {"simple": 1 / 400, "complex_indexed": 1 / 150, "complex_unindexed": 0.4},
    })
    # peer CPU per endorsement: fixed chaincode overhead plus the key read
    exec_base: float = 0.0008
    sim_read_cpu: dict = field(default_factory=lambda: {"LevelDB": 0.00067, "CouchDB": 0.00603})
    # CPU per state write done alongside the serial commit
    db_write_cpu: dict = field(default_factory=lambda: {"LevelDB": 0.00076, "CouchDB": 0.00255})
    matmul_coeff: float = 9.78e-9
    # seconds per payload byte carried in the proposal (client-origin data)
    payload_cpu_coeff: float = 1.0e-6
    # seconds per payload byte generated inside the chaincode (peer-origin data)
    payload_gen_coeff: float = 5.0e-8
    # per-peer validation: base + per endorsement + per pair of endorsements
    validation_base: float = 0.00015
    validation_per_endorsement: float = 0.0001
    validation_per_pair: float = 0.00009
    validate_payload_coeff: float = 1.0e-7
    block_overhead: float = 0.001
    orderer_tx_cpu: float = 0.00005
    client_tx_cpu: float = 0.0001
    # message sizes
    cert_bytes: int = 1000
    tx_overhead_bytes: int = 1300
    tls_overhead_bytes: int = 100
    small_msg_bytes: int = 200
    endorse_timeout: float = 5.0
    election_timeout: float = 5.0
    external_db_factor: float = 0.85
    colocated_orderer_factor: float = 1.1

    def validate(self) -> "CostProfile":
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            vals = []
            if isinstance(v, dict):
                for x in v.values():
                    vals.extend(x.values() if isinstance(x, dict) else [x])
            else:
                vals = [v]
            for x in vals:
                if not isinstance(x, (int, float)) or x < 0:
                    raise ConfigError("must be a non-negative number", f"cost.{f.name}")
        for db, v in self.db_write_service.items():
            if v <= 0:
                raise ConfigError("service times must be > 0", f"cost.db_write_service.{db}")
        return self

    @classmethod
    def load(cls, path) -> "CostProfile":
        data = json.loads(Path(path).read_text())
        known = {f.name for f in dataclasses.fields(cls)}
        base = cls()
        for key, value in data.items():
            if key not in known:
                raise ConfigError("unknown key", f"cost.{key}")
            if isinstance(getattr(base, key), dict):
                merged = dict(getattr(base, key))
                merged.update(value)
                value = merged
            setattr(base, key, value)
        return base.validate()

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    # -- cost functions -------------------------------------------------------

    def exec_cost(self, spec: WorkloadSpec, db: str) -> float:
        """CPU seconds one endorser spends simulating ``spec``."""
        if spec.kind == "matmul":
            return self.exec_base + self.matmul_coeff * spec.n ** 3
        if spec.kind == "read":
            return self.exec_base
        cost = self.exec_base + self.sim_read_cpu[db]
        if spec.data_origin == "client":
            cost += self.payload_cpu_coeff * spec.payload_bytes
        else:
            cost += self.payload_gen_coeff * spec.payload_bytes
        return cost

    def validation_cost(self, k: int, payload_bytes: int = 0) -> float:
        """CPU seconds a peer spends validating one transaction."""
        return (self.validation_base + self.validation_per_endorsement * k
                + self.validation_per_pair * k * (k - 1) / 2
                + self.validate_payload_coeff * payload_bytes)

    def write_service(self, db: str, external: bool = False) -> float:
        s = self.db_write_service[db]
        return s * self.external_db_factor if external else s

    def commit_writes(self, spec: WorkloadSpec, private: bool = False, authorized: bool = False) -> int:
        return spec.writes * (2 if private and authorized else 1)

    def commit_cost(self, db: str, private: bool = False, authorized: bool = False,
                    external: bool = False, spec: WorkloadSpec = WorkloadSpec()) -> float:
        return self.commit_writes(spec, private, authorized) * self.write_service(db, external)

    def read_service(self, db: str, query: str) -> float:
        try:
            return self.db_read_service[db][query]
        except KeyError:
            raise UnsupportedQuery(f"{query} queries are not supported on {db}") from None

    def read_throughput(self, db: str, query: str = "simple") -> float:
        return 1.0 / self.read_service(db, query)

    def tx_wire_size(self, payload_bytes: int, k: int, tls: bool, with_payload: bool = True) -> int:
        size = k * self.cert_bytes + self.tx_overhead_bytes
        if with_payload:
            size += payload_bytes
        if tls:
            size += self.tls_overhead_bytes
        return size


DEFAULT_PROFILE = CostProfile()


def hardware_scale(base: float, hw) -> float:
    """Per-task CPU cost on ``hw``; capacity scales through the pool width instead."""
    return base


class Pool:
    """Resource with ``width`` identical servers and a priority queue.

    Lower ``priority`` values are served first; equal priorities are FIFO.

    Busy time is accumulated per server in one-second buckets so that both
    node-level and single-core utilisation can be reported.
    """

    def __init__(self, sim: Simulator, node: str, width: int, name: str = "cpu"):
        if width < 1:
            raise ValueError("width must be >= 1")
        self.sim = sim
        self.node = node
        self.width = width
        self.name = name
        self._free = list(range(width))
        self._queue: list = []
        self._qseq = 0
        self.busy = [defaultdict(float) for _ in range(width)]
        self.completed = 0

    @property
    def in_service(self) -> int:
        return self.width - len(self._free)

    @property
    def queued(self) -> int:
        return len(self._queue)

    def submit(self, duration: float, fn=None, args=(), priority: int = 1):
        if self._free:
            self._start(duration, fn, args)
        else:
            self._qseq += 1
            heapq.heappush(self._queue, (priority, self._qseq, duration, fn, args))

    def charge(self, duration: float):
        """Account CPU time that never delays anything (cheap bookkeeping work)."""
        self._rr = (getattr(self, "_rr", -1) + 1) % self.width
        now = self.sim.now
        self._account(self._rr, now, now + duration)

    def _start(self, duration, fn, args):
        core = heapq.heappop(self._free)
        now = self.sim.now
        end = now + duration
        self._account(core, now, end)
        self.sim.schedule(end, EventKind.SERVICE, self.node, self._done, (core, fn, args),
                          detail=self.name)

    def _account(self, core, start, end):
        b = self.busy[core]
        t = start
        while t < end:
            sec = int(t)
            nxt = min(end, sec + 1.0)
            b[sec] += nxt - t
            t = nxt

    def _done(self, core, fn, args):
        self.completed += 1
        heapq.heappush(self._free, core)
        if self._queue:
            _, _, duration, fn2, args2 = heapq.heappop(self._queue)
            self._start(duration, fn2, args2)
        if fn is not None:
            fn(*args)

    def utilization(self, t0: int, t1: int) -> list[float]:
        """Busy fraction of the whole pool per second in ``[t0, t1)``."""
        return [sum(c.get(s, 0.0) for c in self.busy) / self.width for s in range(t0, t1)]

    def max_core_utilization(self, t0: int, t1: int) -> float:
        return max((c.get(s, 0.0) for c in self.busy for s in range(t0, t1)), default=0.0)
