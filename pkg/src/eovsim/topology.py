"""Node graph, datacenter placement, link delays and traffic accounting."""

from __future__ import annotations

import json
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .config import ConfigError, NetworkConfig
from .engine import EventKind, Simulator

CLIENT, PEER, ORDERER = "client", "peer", "orderer"


@dataclass(frozen=True)
class HardwareProfile:
    name: str
    vcpus: int
    network_gbps: float = 10.0
    storage_mbps: float = 4750.0

    @property
    def bytes_per_s(self) -> float:
        return self.network_gbps * 1e9 / 8


HARDWARE = {
    "m5.large": HardwareProfile("m5.large", 2),
    "m5.xlarge": HardwareProfile("m5.xlarge", 4),
    "m5.2xlarge": HardwareProfile("m5.2xlarge", 8),
    "m5.4xlarge": HardwareProfile("m5.4xlarge", 16),
}


def hardware(name: str, key: str = "node_type") -> HardwareProfile:
    try:
        return HARDWARE[name]
    except KeyError:
        raise ConfigError(f"unknown hardware profile {name!r}", key) from None


@dataclass
class DelayMatrix:
    """One-way delays in ms between datacenters."""

    labels: list
    ms: list

    def __post_init__(self):
        n = len(self.labels)
        if len(set(self.labels)) != n:
            raise ConfigError("duplicate datacenter label", "delay_matrix")
        if len(self.ms) != n or any(len(row) != n for row in self.ms):
            raise ConfigError("matrix must be square and match the labels", "delay_matrix")
        for i in range(n):
            if self.ms[i][i] != 0:
                raise ConfigError("diagonal must be zero", "delay_matrix")
            for j in range(n):
                if self.ms[i][j] != self.ms[j][i] or self.ms[i][j] < 0:
                    raise ConfigError("matrix must be symmetric and non-negative", "delay_matrix")
        self._index = {lab: i for i, lab in enumerate(self.labels)}

    def __getitem__(self, pair) -> float:
        a, b = pair
        return self.ms[self._index[a]][self._index[b]]

    def __contains__(self, label) -> bool:
        return label in self._index

    @classmethod
    def from_pairs(cls, labels, pairs: dict) -> "DelayMatrix":
        idx = {lab: i for i, lab in enumerate(labels)}
        ms = [[0.0] * len(labels) for _ in labels]
        for (a, b), v in pairs.items():
            ms[idx[a]][idx[b]] = ms[idx[b]][idx[a]] = float(v)
        return cls(list(labels), ms)

    @classmethod
    def load(cls, path) -> "DelayMatrix":
        data = json.loads(Path(path).read_text())
        try:
            return cls(list(data["labels"]), [[float(v) for v in row] for row in data["ms"]])
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"{path}: expected keys 'labels' and 'ms'", "delay_matrix") from exc

    def to_dict(self) -> dict:
        return {"labels": list(self.labels), "ms": [list(r) for r in self.ms]}


# Estimated from public inter-region latency tables; only the 30 ms European
# figure and the 330 ms intercontinental maximum are fixed points.
DELAY_MATRICES = {
    "single-dc": DelayMatrix(["DC"], [[0.0]]),
    "europe": DelayMatrix.from_pairs(
        ["DE", "IE", "IT", "SE"],
        {(a, b): 30 for a in ["DE", "IE", "IT", "SE"] for b in ["DE", "IE", "IT", "SE"] if a != b},
    ),
    "intercontinental": DelayMatrix.from_pairs(
        ["DE", "BR", "SG", "US-E"],
        {("DE", "BR"): 110, ("DE", "SG"): 90, ("DE", "US-E"): 45,
         ("BR", "SG"): 330, ("BR", "US-E"): 60, ("SG", "US-E"): 115},
    ),
}

INTRA_DC_MS = 0.2


@dataclass(slots=True)
class Node:
    id: str
    role: str
    org: int
    index: int
    dc: str
    hw: HardwareProfile


class Topology:
    """Nodes, roles and links for one network.

    Peers are ``p<org>.<i>``, orderers ``o<j>`` and clients ``c<org>.<i>``.
    Orderer ``j`` belongs to org ``j % org_count``. ``extra_delay`` (seconds)
    is added to every message between two distinct nodes.
    """

    def __init__(self, cfg: NetworkConfig, matrix: DelayMatrix, org_dc: list,
                 intra_ms: float = INTRA_DC_MS):
        self.cfg = cfg
        self.matrix = matrix
        self.org_dc = list(org_dc)
        self.intra = intra_ms / 1000.0
        self.extra_delay = 0.0
        self.nodes: dict[str, Node] = {}
        self.peers_by_org: list[list[str]] = []
        self.clients: list[str] = []
        self.orderers: list[str] = []
        peer_hw = hardware(cfg.node_type)
        client_hw = hardware(cfg.client_type, "client_type")
        for org in range(cfg.org_count):
            dc = self.org_dc[org]
            peers = []
            for i in range(cfg.peer_count):
                nid = f"p{org}.{i}"
                self.nodes[nid] = Node(nid, PEER, org, i, dc, peer_hw)
                peers.append(nid)
            self.peers_by_org.append(peers)
        for j in range(cfg.orderer_count):
            org = j % cfg.org_count
            nid = f"o{j}"
            self.nodes[nid] = Node(nid, ORDERER, org, j, self.org_dc[org], peer_hw)
            self.orderers.append(nid)
        for org in range(cfg.org_count):
            for i in range(cfg.client_count):
                nid = f"c{org}.{i}"
                self.nodes[nid] = Node(nid, CLIENT, org, i, self.org_dc[org], client_hw)
                self.clients.append(nid)
        self.anchors = [peers[0] for peers in self.peers_by_org]
        self.endorsers = {c: self._endorser_set(c) for c in self.clients}
        self.subscription = {c: self._subscribed_peer(c) for c in self.clients}
        self._build_links()
        self.traffic = Traffic(self.nodes)

    # -- derived assignments ----------------------------------------------

    def endorser_orgs(self, client: str) -> list[int]:
        """Orgs whose peers endorse for ``client``: its own org first."""
        node = self.nodes[client]
        pol = self.cfg.policy
        n, k, i = pol.n, pol.k, node.index
        home = node.org % n
        orgs = [home]
        for j in range(k - 1):
            orgs.append((home + 1 + ((i + j) % (n - 1))) % n)
        return orgs

    def _endorser_set(self, client: str) -> list[str]:
        i = self.nodes[client].index
        pc = self.cfg.peer_count
        return [self.peers_by_org[org][(i + j) % pc] for j, org in enumerate(self.endorser_orgs(client))]

    def collection(self, client: str) -> list[int]:
        """Orgs authorised to store a private payload sent by ``client``."""
        node = self.nodes[client]
        n = self.cfg.org_count
        fors = self.cfg.private_fors
        orgs = self.endorser_orgs(client)
        extra = [(node.org + s) % n for s in range(1, n)]
        for org in extra:
            if len(orgs) >= fors:
                break
            if org not in orgs:
                orgs.append(org)
        return sorted(orgs[:fors])

    def _subscribed_peer(self, client: str) -> str:
        node = self.nodes[client]
        peers = self.peers_by_org[node.org]
        if len(peers) == 1:
            return peers[0]
        return peers[1 + node.index % (len(peers) - 1)]

    def orderer_for_org(self, org: int) -> str:
        return self.orderers[org % len(self.orderers)]

    def channel_of(self, client: str) -> int:
        return self.nodes[client].index % self.cfg.channel_count

    # -- links --------------------------------------------------------------

    def _build_links(self):
        self._dc_delay = {}
        for a in set(self.org_dc):
            for b in set(self.org_dc):
                self._dc_delay[a, b] = self.intra if a == b else self.matrix[a, b] / 1000.0

    def link_delay(self, a: str, b: str) -> float:
        """One-way delay in seconds, excluding any injected extra delay."""
        if a == b:
            return 0.0
        return self._dc_delay[self.nodes[a].dc, self.nodes[b].dc]

    def transfer_time(self, a: str, b: str, nbytes: float) -> float:
        bw = min(self.nodes[a].hw.bytes_per_s, self.nodes[b].hw.bytes_per_s)
        return nbytes / bw


class Traffic:
    """Per-node byte counters in one-second buckets."""

    def __init__(self, nodes):
        self.out = {n: defaultdict(float) for n in nodes}
        self.inb = {n: defaultdict(float) for n in nodes}
        self.total_out = dict.fromkeys(nodes, 0.0)
        self.total_in = dict.fromkeys(nodes, 0.0)

    def record(self, a, b, nbytes, at, arrival):
        self.out[a][int(at)] += nbytes
        self.inb[b][int(arrival)] += nbytes
        self.total_out[a] += nbytes
        self.total_in[b] += nbytes


class Network:
    """Message transport over a topology.

    Arrival is ``at + delay + bytes / min(up, down)``; messages on one link
    never overtake each other.
    """

    def __init__(self, sim: Simulator, topo: Topology):
        self.sim = sim
        self.topo = topo
        self.traffic = topo.traffic
        self._last = {}
        self._delay = topo._dc_delay
        self._nodes = topo.nodes

    def transmit(self, a: str, b: str, nbytes: float, action, args=(), detail="msg",
                 at: Optional[float] = None) -> float:
        sim = self.sim
        if at is None:
            at = sim.now
        if a == b:
            arrival = at
        else:
            na, nb = self._nodes[a], self._nodes[b]
            bw = min(na.hw.bytes_per_s, nb.hw.bytes_per_s)
            arrival = at + self._delay[na.dc, nb.dc] + self.topo.extra_delay + nbytes / bw
            last = self._last.get((a, b))
            if last is not None and last > arrival:
                arrival = last
            self._last[a, b] = arrival
            self.traffic.record(a, b, nbytes, at, arrival)
        sim.schedule(arrival, EventKind.MESSAGE, b, action, args, src=a, detail=detail)
        return arrival


def resolve_placement(cfg: NetworkConfig, matrix: Optional[DelayMatrix] = None):
    """Returns (matrix, org -> datacenter) for ``cfg.placement``."""
    if matrix is None:
        if cfg.placement not in DELAY_MATRICES:
            raise ConfigError(f"unknown placement {cfg.placement!r}", "placement")
        matrix = DELAY_MATRICES[cfg.placement]
    labels = matrix.labels
    return matrix, [labels[org % len(labels)] for org in range(cfg.org_count)]


def build_topology(cfg: NetworkConfig, matrix: Optional[DelayMatrix] = None,
                   org_dc: Optional[list] = None, intra_ms: float = INTRA_DC_MS) -> Topology:
    cfg.validate()
    if org_dc is None:
        matrix, org_dc = resolve_placement(cfg, matrix)
    else:
        if matrix is None:
            matrix = resolve_placement(cfg)[0]
        if len(org_dc) != cfg.org_count:
            raise ConfigError("placement must name one datacenter per org", "placement")
        for dc in org_dc:
            if dc not in matrix:
                raise ConfigError(f"unknown datacenter {dc!r}", "placement")
    return Topology(cfg, matrix, org_dc, intra_ms)


def traffic_report(topo: Topology, leader: Optional[str] = None, window=None) -> dict:
    """Max upload/download MB/s over 1 s buckets and totals, per node and per role.

    ``window`` restricts the max to buckets in ``[start, end)``.
    """
    tr = topo.traffic

    def peak(series):
        if window is not None:
            lo, hi = window
            vals = [v for t, v in series.items() if lo <= t < hi]
        else:
            vals = list(series.values())
        return max(vals, default=0.0) / 1e6

    nodes = {}
    for nid, node in topo.nodes.items():
        nodes[nid] = {
            "role": node.role,
            "max_upload_mbps": peak(tr.out[nid]),
            "max_download_mbps": peak(tr.inb[nid]),
            "total_out": tr.total_out[nid],
            "total_in": tr.total_in[nid],
        }
    groups = defaultdict(list)
    for nid, row in nodes.items():
        role = row["role"]
        if role == ORDERER:
            role = "leader" if nid == leader else "orderer"
        groups[role].append(row)
    roles = {
        role: {
            "count": len(rows),
            "max_upload_mbps": max(r["max_upload_mbps"] for r in rows),
            "mean_max_upload_mbps": sum(r["max_upload_mbps"] for r in rows) / len(rows),
            "max_download_mbps": max(r["max_download_mbps"] for r in rows),
            "mean_max_download_mbps": sum(r["max_download_mbps"] for r in rows) / len(rows),
        }
        for role, rows in sorted(groups.items())
    }
    return {"nodes": nodes, "roles": roles, "leader": leader}
