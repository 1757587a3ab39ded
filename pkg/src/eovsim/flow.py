"""Execute-order-validate transaction lifecycle on top of the topology.

A :class:`FabricNetwork` owns one simulator run: it builds the nodes, their
CPU pools and commit resources, the ordering service, and implements the
client, endorser and committer state machines.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Optional

from .config import BenchConfig, ConfigError, NetworkConfig
from .costs import DEFAULT_PROFILE, CostProfile, Pool, WorkloadSpec
from .engine import EventKind, Simulator
from .ordering import OrderingService
from .topology import CLIENT, ORDERER, PEER, DelayMatrix, Network, build_topology

PENDING, COMMITTED, FAILED = "Pending", "Committed", "Failed"
NOTIFY_BYTES_PER_TX = 64


@dataclass(slots=True, eq=False)
class Transaction:
    tx_id: int
    client: str
    spec: WorkloadSpec
    channel: int = 0
    collection: Optional[tuple] = None      # orgs, for private transactions
    requested: float = 0.0
    endorsed: Optional[float] = None
    ordered: Optional[float] = None
    first_commit: Optional[float] = None
    confirmed: Optional[float] = None
    status: str = PENDING
    reason: str = ""
    endorsers: list = field(default_factory=list)
    commits: int = 0

    @property
    def private(self) -> bool:
        return self.collection is not None

    @property
    def visibility(self) -> str:
        return "private" if self.collection is not None else "public"


@dataclass(slots=True)
class Endorsement:
    peer: str
    tx_id: int
    rwset_bytes: int
    signature_bytes: int


class _Ledger:
    """Committer state of one peer on one channel."""

    __slots__ = ("next", "waiting", "busy", "heights")

    def __init__(self):
        self.next = 1
        self.waiting = {}
        self.busy = False
        self.heights = []


class FabricNetwork:
    """One simulated network plus the transactions submitted to it."""

    def __init__(self, net: NetworkConfig, bench: Optional[BenchConfig] = None,
                 costs: Optional[CostProfile] = None, seed: int = 0,
                 matrix: Optional[DelayMatrix] = None, keep_log: bool = False):
        net.validate()
        bench = (bench or BenchConfig()).validate()
        self.cfg = net
        self.bench = bench
        self.costs = costs or DEFAULT_PROFILE
        self.policy = net.policy
        self.topo = build_topology(net, matrix)
        self.topo.extra_delay = bench.delay / 1000.0
        self.sim = Simulator(seed, keep_log=keep_log, nodes=self.topo.nodes)
        self.netw = Network(self.sim, self.topo)
        self.spec = WorkloadSpec.from_bench(bench)
        self.private = bench.mode == "private"
        if self.private and not self.policy.k <= net.private_fors <= net.org_count:
            raise ConfigError("private collections need k <= private_fors <= org_count",
                              "private_fors")
        if self.spec.kind == "read":
            self.costs.read_service(net.database, self.spec.query)
        db = net.database
        self.db = db
        self.external_db = net.external_database
        self.cpu: dict[str, Pool] = {}
        self.store: dict = {}
        for nid, node in self.topo.nodes.items():
            self.cpu[nid] = Pool(self.sim, nid, node.hw.vcpus, "cpu")
        for org_peers in self.topo.peers_by_org:
            for p in org_peers:
                self.store[p] = [Pool(self.sim, p, 1, f"commit{c}") for c in range(net.channel_count)]
        # orderers sharing a host with a peer slow that peer's CPU work
        self.cpu_factor = {p: 1.0 for p in self.topo.nodes}
        if net.internal_orderer:
            for o in self.topo.orderers:
                org = self.topo.nodes[o].org
                self.cpu_factor[self.topo.peers_by_org[org][0]] = self.costs.colocated_orderer_factor
        self.ledgers = {p: [_Ledger() for _ in range(net.channel_count)]
                        for peers in self.topo.peers_by_org for p in peers}
        self.transient = defaultdict(set)         # peer -> private tx ids held
        self.private_store = defaultdict(int)     # peer -> private payloads written
        self.hash_store = defaultdict(int)        # peer -> hashes written
        self.subscribers = defaultdict(list)      # peer -> clients
        for c, p in self.topo.subscription.items():
            self.subscribers[p].append(c)
        self.txs: list[Transaction] = []
        self.block_log: list = []                 # (peer, channel, height, time)
        self.ordering = OrderingService(self.sim, self.netw, self.topo, self.costs, self.cpu,
                                        self._wire_size, self._on_block, self._fail)
        self._pending_endorse: dict = {}
        self._acks_needed: dict = {}
        self.ordering.ledger_height = self._height
        self.sim.on_crash(self._on_crash)
        k = self.policy.k
        pay = self.spec.payload_bytes if self.spec.kind == "write" else 0
        self._payload = pay
        self._exec = self.costs.exec_cost(self.spec, db)
        self._validate = self.costs.validation_cost(k, pay)
        self._proposal_bytes = (self.costs.small_msg_bytes + self.costs.cert_bytes
                                + (pay if self.spec.data_origin == "client" else 0))

    # -- sizes ------------------------------------------------------------

    def _wire_size(self, tx: Transaction) -> int:
        return self.costs.tx_wire_size(self._payload, self.policy.k, self.cfg.tls_enabled,
                                       with_payload=not tx.private)

    # -- client -------------------------------------------------------------

    def submit(self, client: str, at: float) -> Transaction:
        """Schedule a transaction sent by ``client`` at time ``at``."""
        tx = Transaction(len(self.txs), client, self.spec, self.topo.channel_of(client))
        if self.private:
            tx.collection = tuple(self.topo.collection(client))
        tx.requested = at
        self.txs.append(tx)
        self.sim.schedule(at, EventKind.CLIENT_SEND, client, self._send, (tx,), detail="send")
        return tx

    def _send(self, tx: Transaction):
        c = tx.client
        self.cpu[c].charge(self.costs.client_tx_cpu)
        if self.spec.kind == "read":
            node = self.topo.nodes[c]
            peers = self.topo.peers_by_org[node.org]
            peer = peers[tx.tx_id % len(peers)]
            self.netw.transmit(c, peer, self.costs.small_msg_bytes, self._query, (peer, tx),
                               detail="query")
            return
        self._pending_endorse[tx.tx_id] = []
        for peer in self.topo.endorsers[c]:
            self._propose(c, peer, tx)
        self.sim.after(self.costs.endorse_timeout, EventKind.TIMER, c, self._endorse_deadline,
                       (tx,), detail="endorse_timeout")

    def _endorse_deadline(self, tx: Transaction):
        if tx.endorsed is None:
            self._fail(tx, "endorsement_timeout")

    def _propose(self, c, peer, tx):
        if self.cfg.endorser_mode == "failover" and not self.sim.alive(peer):
            sub = self._substitute(peer)
            if sub is not None:
                # the dead endorser is noticed after one round trip
                rtt = 2 * (self.topo.link_delay(c, peer) + self.topo.extra_delay)
                self.sim.after(rtt, EventKind.TIMER, c, self._propose, (c, sub, tx),
                               detail="failover")
                return
        self.netw.transmit(c, peer, self._proposal_bytes, self._endorse, (peer, tx),
                           detail="proposal")

    def _substitute(self, peer):
        org = self.topo.nodes[peer].org
        for p in self.topo.peers_by_org[org]:
            if p != peer and self.sim.alive(p):
                return p
        return None

    def _endorsed(self, tx: Transaction, e: Endorsement):
        if tx.status != PENDING or tx.endorsed is not None:
            return
        got = self._pending_endorse[tx.tx_id]
        got.append(e)
        if len(got) == self.policy.k:
            del self._pending_endorse[tx.tx_id]
            tx.endorsed = self.sim.now
            tx.endorsers = [x.peer for x in got]
            self.cpu[tx.client].charge(self.costs.client_tx_cpu)
            self.ordering.submit(tx.client, tx, tx.channel)

    def _fail(self, tx: Transaction, reason: str):
        if tx.status == PENDING:
            tx.status = FAILED
            tx.reason = reason
            self._pending_endorse.pop(tx.tx_id, None)

    def _notified(self, client, txs):
        now = self.sim.now
        for tx in txs:
            if tx.status == PENDING:
                tx.status = COMMITTED
                tx.confirmed = now

    # -- endorser -------------------------------------------------------------

    def _endorse(self, peer, tx):
        self.cpu[peer].submit(self._exec * self.cpu_factor[peer], self._executed, (peer, tx))

    def _executed(self, peer, tx):
        if tx.private:
            others = self._push_targets(peer, tx)
            self.transient[peer].add(tx.tx_id)
            self._acks_needed[peer, tx.tx_id] = True
            for p in others:
                self.netw.transmit(peer, p, self._payload + self.costs.small_msg_bytes,
                                   self._disseminated, (p, peer, tx), detail="pvt_push")
            return
        self._reply(peer, tx)

    def _push_targets(self, peer, tx):
        """Authorised peers that receive the payload straight from ``peer``.

        Peers of other collection orgs come first (one of them must ack),
        rotated by transaction id; at most ``max_peer_count`` are chosen.
        """
        org = self.topo.nodes[peer].org
        foreign = [p for o in tx.collection if o != org for p in self.topo.peers_by_org[o]]
        local = [p for p in self.topo.peers_by_org[org] if p != peer]
        r = tx.tx_id % len(foreign)
        ordered = foreign[r:] + foreign[:r] + local
        limit = self.cfg.max_peer_count
        return ordered[:limit] if limit else ordered

    def _disseminated(self, p, endorser, tx):
        self.transient[p].add(tx.tx_id)
        self.netw.transmit(p, endorser, self.costs.small_msg_bytes, self._push_ack,
                           (endorser, p, tx), detail="pvt_ack")

    def _push_ack(self, endorser, p, tx):
        key = endorser, tx.tx_id
        if not self._acks_needed.get(key):
            return
        if self.topo.nodes[p].org == self.topo.nodes[endorser].org:
            return
        del self._acks_needed[key]
        self._reply(endorser, tx)

    def _reply(self, peer, tx):
        rw = self.costs.small_msg_bytes + (0 if tx.private else self._payload)
        e = Endorsement(peer, tx.tx_id, rw, self.costs.cert_bytes)
        self.netw.transmit(peer, tx.client, rw + e.signature_bytes, self._endorsed, (tx, e),
                           detail="endorsement")

    def _query(self, peer, tx):
        svc = self.costs.read_service(self.db, self.spec.query)
        self.store[peer][0].submit(svc, self._answer, (peer, tx))

    def _answer(self, peer, tx):
        self.netw.transmit(peer, tx.client, self.costs.small_msg_bytes + 100, self._notified,
                           (tx.client, [tx]), detail="query_result")

    # -- committer ------------------------------------------------------------

    def _on_block(self, peer, block):
        for tx in block.txs:
            if tx.ordered is None:
                tx.ordered = block.committed_at
        if peer in self.topo.anchors:
            org = self.topo.nodes[peer].org
            for p in self.topo.peers_by_org[org]:
                if p != peer:
                    self.netw.transmit(peer, p, block.bytes, self._receive, (p, block),
                                       detail=f"gossip {block.channel}:{block.height}")
        self._receive(peer, block)

    def _height(self, peer, channel) -> int:
        led = self.ledgers[peer][channel]
        h = led.next - (0 if led.busy else 1)
        while h + 1 in led.waiting:
            h += 1
        return h

    def _receive(self, peer, block):
        led = self.ledgers[peer][block.channel]
        if block.height < led.next or block.height in led.waiting \
                or (led.busy and block.height == led.next):
            return
        led.waiting[block.height] = block
        self._advance(peer, led)

    def _advance(self, peer, led):
        if led.busy or led.next not in led.waiting:
            return
        block = led.waiting.pop(led.next)
        led.busy = True
        n = len(block.txs)
        pool = self.cpu[peer]
        chunks = min(pool.width, n) or 1
        per_tx = self._validate * self.cpu_factor[peer]
        state = {"left": chunks}
        base, extra = divmod(n, chunks)
        for i in range(chunks):
            size = base + (1 if i < extra else 0)
            pool.submit(per_tx * size + (self.costs.block_overhead if i == 0 else 0.0),
                        self._validated, (peer, led, block, state), priority=0)

    def _validated(self, peer, led, block, state):
        state["left"] -= 1
        if state["left"]:
            return
        org = self.topo.nodes[peer].org
        missing = []
        if self.private:
            held = self.transient[peer]
            missing = [tx for tx in block.txs if org in tx.collection and tx.tx_id not in held]
        if not missing:
            self._commit(peer, led, block)
            return
        state["pulls"] = len(missing)
        for tx in missing:
            src = next((e for e in tx.endorsers if e != peer), tx.endorsers[0])
            self.netw.transmit(peer, src, self.costs.small_msg_bytes, self._pull_request,
                               (src, peer, led, block, state, tx), detail="pvt_pull")

    def _pull_request(self, src, peer, led, block, state, tx):
        self.netw.transmit(src, peer, self._payload + self.costs.small_msg_bytes,
                           self._pulled, (peer, led, block, state, tx), detail="pvt_data")

    def _pulled(self, peer, led, block, state, tx):
        self.transient[peer].add(tx.tx_id)
        state["pulls"] -= 1
        if state["pulls"] == 0:
            self._commit(peer, led, block)

    def _commit(self, peer, led, block):
        org = self.topo.nodes[peer].org
        writes = 0
        spec = self.spec
        for tx in block.txs:
            auth = tx.private and org in tx.collection
            w = self.costs.commit_writes(spec, tx.private, auth)
            writes += w
            if tx.private and spec.writes:
                self.hash_store[peer] += 1
                if auth:
                    self.private_store[peer] += 1
        svc = writes * self.costs.write_service(self.db, self.external_db)
        if self.external_db:
            svc += 2 * self.topo.intra
        cpu = writes * self.costs.db_write_cpu[self.db] * self.cpu_factor[peer]
        pool = self.cpu[peer]
        chunks = max(1, min(pool.width, writes))
        state = {"left": 1 + chunks}
        self.store[peer][block.channel].submit(svc, self._committed, (peer, led, block, state))
        for _ in range(chunks):
            pool.submit(cpu / chunks, self._committed, (peer, led, block, state), priority=0)

    def _committed(self, peer, led, block, state):
        state["left"] -= 1
        if state["left"]:
            return
        now = self.sim.now
        led.heights.append(block.height)
        self.block_log.append((peer, block.channel, block.height, now))
        by_client = defaultdict(list)
        subs = self.subscribers[peer]
        for tx in block.txs:
            tx.commits += 1
            if tx.first_commit is None:
                tx.first_commit = now
            if tx.client in subs:
                by_client[tx.client].append(tx)
        for c in subs:
            txs = by_client.get(c)
            if txs:
                self.netw.transmit(peer, c, NOTIFY_BYTES_PER_TX * len(txs), self._notified,
                                   (c, txs), detail="commit_event")
        led.busy = False
        led.next += 1
        self._advance(peer, led)

    # -- faults ---------------------------------------------------------------

    def _on_crash(self, node):
        if self.topo.nodes[node].role != PEER:
            return
        clients = self.subscribers.pop(node, [])
        org = self.topo.nodes[node].org
        live = [p for p in self.topo.peers_by_org[org] if self.sim.alive(p)]
        for i, c in enumerate(clients):
            if live:
                p = live[i % len(live)]
                self.subscribers[p].append(c)
                self.topo.subscription[c] = p

    def crash(self, node, t: float):
        self.sim.schedule_crash(node, t)

    # -- driving ----------------------------------------------------------------

    def run(self, until: float):
        return self.sim.run_until(until)

    def leader(self):
        return self.ordering.leader


def _legs_for_client(topo, cfg, client, private: bool) -> int:
    legs = 2 + 1                                    # proposal, endorsement, submit
    if private:
        legs += 2                                   # payload push and its ack
    raft = cfg.orderer_type == "RAFT" and cfg.orderer_count > 1 and cfg.quorum > 1
    if raft:
        legs += 2                                   # append and ack
    org = topo.nodes[client].org
    anchor = topo.anchors[org]
    src = topo.orderer_for_org(org)
    if raft and src != topo.orderers[0]:
        legs += 1                                   # commit notice to that follower
    legs += 1                                       # orderer to anchor
    if topo.subscription[client] != anchor:
        legs += 1                                   # intra-org forward
    legs += 1                                       # commit event to client
    return legs


def critical_path_legs(cfg: NetworkConfig, visibility: str = "public") -> float:
    """Mean number of inter-node messages on a transaction's latency path.

    Averaged over clients, since clients of the orderer leader's org skip the
    follower commit notice. The value is the slope of mean low-load latency
    against an extra delay added to every message.
    """
    topo = build_topology(cfg)
    private = visibility == "private"
    legs = [_legs_for_client(topo, cfg, c, private) for c in topo.clients]
    return sum(legs) / len(legs)
