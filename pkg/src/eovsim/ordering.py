"""Block cutting and ordering consensus (Solo and leader-based RAFT)."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

from .engine import EventKind, Simulator

BLOCK_HEADER_BYTES = 1000
TIME_EPS = 1e-9


class CutReason(str, Enum):
    TIMEOUT = "Timeout"
    MESSAGE_COUNT = "MessageCount"
    PREFERRED_BYTES = "PreferredBytes"
    ABSOLUTE_BYTES = "AbsoluteBytes"
    CATCH_UP = "CatchUp"


@dataclass(slots=True, eq=False)
class Block:
    height: int
    txs: list
    bytes: int
    cut_reason: CutReason
    created_at: float
    term: int = 1
    channel: int = 0
    committed_at: Optional[float] = None

    @property
    def tx_count(self) -> int:
        return len(self.txs)


class Batcher:
    """Pending batch plus cut rules for one channel.

    ``add`` returns False when the transaction alone exceeds the absolute
    byte cap; such a transaction is never batched. Blocks are handed to
    ``on_cut(txs, nbytes, reason)``.
    """

    def __init__(self, sim: Simulator, node, batch_timeout: float, max_count: int,
                 preferred_bytes: int, absolute_bytes: int, on_cut: Callable):
        self.sim = sim
        self.node = node
        self.timeout = batch_timeout
        self.max_count = max_count
        self.preferred = preferred_bytes
        self.absolute = absolute_bytes
        self.on_cut = on_cut
        self.pending: list = []
        self.pending_bytes = 0
        self.started_at: Optional[float] = None
        self._gen = 0

    def add(self, tx, size: int) -> bool:
        if size > self.absolute:
            return False
        if self.pending and self.sim.now >= self.started_at + self.timeout - TIME_EPS:
            # the timer is due; float rounding must not let this tx sneak in
            self.cut(CutReason.TIMEOUT)
        if self.pending:
            if self.pending_bytes + size > self.absolute:
                self.cut(CutReason.ABSOLUTE_BYTES)
            elif self.pending_bytes + size > self.preferred:
                self.cut(CutReason.PREFERRED_BYTES)
        self.pending.append(tx)
        self.pending_bytes += size
        if len(self.pending) == 1:
            self.started_at = self.sim.now
            self._gen += 1
            self.sim.after(self.timeout, EventKind.TIMER, self.node, self._expire, (self._gen,),
                           detail="batch_timeout")
        if len(self.pending) >= self.max_count:
            self.cut(CutReason.MESSAGE_COUNT)
        elif size > self.preferred:
            self.cut(CutReason.PREFERRED_BYTES)
        return True

    def _expire(self, gen):
        if gen == self._gen and self.pending:
            self.cut(CutReason.TIMEOUT)

    def cut(self, reason: CutReason):
        if not self.pending:
            return
        txs, nbytes = self.pending, self.pending_bytes
        self.pending, self.pending_bytes = [], 0
        self.started_at = None
        self._gen += 1          # cancels the running timer
        self.on_cut(txs, nbytes, reason)


class OrderingService:
    """Ordering nodes for every channel.

    Solo delivers a block as soon as it is cut. RAFT: the leader appends the
    block at every follower; at quorum (leader included) the block commits,
    the leader delivers it to the anchor peers it serves and tells followers
    to do the same for theirs. A crashed leader stalls commits for
    ``election_timeout``; then the lowest live orderer takes over.

    Callbacks used by the protocol layer:

    * ``size_of(tx)`` wire size of a submitted transaction,
    * ``deliver(anchor, block)`` block arrival at an anchor peer,
    * ``fail(tx, reason)`` transaction rejected by the orderer.
    """

    def __init__(self, sim: Simulator, net, topo, costs, cpu: dict, size_of, deliver, fail):
        cfg = topo.cfg
        self.sim = sim
        self.net = net
        self.topo = topo
        self.cfg = cfg
        self.costs = costs
        self.cpu = cpu
        self.size_of = size_of
        self.deliver_cb = deliver
        self.fail_cb = fail
        self.orderers = list(topo.orderers)
        self.raft = cfg.orderer_type == "RAFT"
        self.quorum = cfg.quorum if self.raft else 1
        self.leader: Optional[str] = self.orderers[0]
        self.term = 1
        self.electing = False
        self.election_timeout = costs.election_timeout
        channels = range(cfg.channel_count)
        # per orderer, per channel: blocks known (appended) and commit index
        self.log = {o: {c: {} for c in channels} for o in self.orderers}
        self.commit_index = {o: {c: 0 for c in channels} for o in self.orderers}
        self.next_height = {c: 1 for c in channels}
        self.acks: dict = {}
        self.blocks: list[Block] = []          # committed, in commit order
        self._committed: set = set()
        self.buffer = {o: [] for o in self.orderers}
        self.batchers: dict = {}
        self._make_batchers(self.leader)
        # anchor -> serving orderer, and last height sent per (anchor, channel)
        self.source = {a: topo.orderer_for_org(org) for org, a in enumerate(topo.anchors)}
        self.sent = {(a, c): 0 for a in topo.anchors for c in channels}
        # last block height a peer holds; the protocol layer replaces this
        self.ledger_height = lambda peer, channel: 0
        sim.on_crash(self._on_crash)

    # -- helpers ----------------------------------------------------------

    def _make_batchers(self, leader):
        cfg = self.cfg
        self.batchers = {
            c: Batcher(self.sim, leader, cfg.batch_timeout, cfg.max_message_count,
                       cfg.preferred_max_bytes_b, cfg.absolute_max_bytes_b,
                       lambda txs, nb, why, c=c, leader=leader: self._cut(leader, c, txs, nb, why))
            for c in range(cfg.channel_count)
        }

    def alive(self, o) -> bool:
        return self.sim.alive(o)

    def live_orderers(self) -> list:
        return [o for o in self.orderers if self.sim.alive(o)]

    def entry_for(self, client) -> Optional[str]:
        """Orderer a client submits to right now."""
        if self.leader is not None and not self.electing:
            return self.leader
        org = self.topo.nodes[client].org
        own = [o for o in self.live_orderers() if self.topo.nodes[o].org == org]
        if own:
            return own[0]
        live = self.live_orderers()
        return live[0] if live else None

    # -- submission -------------------------------------------------------

    def submit(self, client, tx, channel: int):
        entry = self.entry_for(client)
        if entry is None:
            return
        size = self.size_of(tx)
        self.net.transmit(client, entry, size, self._receive, (entry, tx, channel, size),
                          detail="submit")

    def _receive(self, o, tx, channel, size):
        self.cpu[o].charge(self.costs.orderer_tx_cpu)
        if o == self.leader and not self.electing:
            self._enqueue(tx, channel, size)
        else:
            self.buffer[o].append((tx, channel, size))

    def _enqueue(self, tx, channel, size):
        if not self.batchers[channel].add(tx, size):
            self.fail_cb(tx, "oversize")

    # -- replication ------------------------------------------------------

    def _cut(self, leader, channel, txs, nbytes, reason):
        height = self.next_height[channel]
        self.next_height[channel] += 1
        block = Block(height, txs, nbytes + BLOCK_HEADER_BYTES, reason, self.sim.now,
                      self.term, channel)
        self._propose(leader, block)

    def _propose(self, leader, block):
        self.log[leader][block.channel][block.height] = block
        if not self.raft:
            self._commit(leader, block)
            return
        self.acks[block.channel, block.height] = 1
        for f in self.orderers:
            if f != leader:
                self.net.transmit(leader, f, block.bytes, self._append, (f, leader, block),
                                  detail=f"append {block.channel}:{block.height}")
        self._check_quorum(leader, block)

    def _append(self, f, leader, block):
        self.log[f][block.channel][block.height] = block
        self.net.transmit(f, leader, self.costs.small_msg_bytes, self._ack, (leader, block),
                          detail=f"ack {block.channel}:{block.height}")

    def _ack(self, leader, block):
        if leader != self.leader or block.term != self.term:
            return
        key = block.channel, block.height
        if key not in self.acks:
            return
        self.acks[key] += 1
        self._check_quorum(leader, block)

    def _check_quorum(self, leader, block):
        ch = block.channel
        # commit in height order
        while True:
            h = self.commit_index[leader][ch] + 1
            if self.acks.get((ch, h), 0) < self.quorum:
                break
            del self.acks[ch, h]
            self._commit(leader, self.log[leader][ch][h])

    def _commit(self, leader, block):
        block.committed_at = self.sim.now
        self.commit_index[leader][block.channel] = block.height
        key = block.channel, block.height
        if key not in self._committed:
            self._committed.add(key)
            self.blocks.append(block)
        self._serve(leader, block.channel)
        if self.raft:
            for f in self.orderers:
                if f != leader:
                    self.net.transmit(leader, f, self.costs.small_msg_bytes, self._learn,
                                      (f, block.channel, block.height),
                                      detail=f"commit {block.channel}:{block.height}")

    def _learn(self, f, channel, height):
        if height > self.commit_index[f][channel] and height in self.log[f][channel]:
            self.commit_index[f][channel] = height
            self._serve(f, channel)

    def _serve(self, o, channel):
        """Send every committed block the anchors served by ``o`` still miss."""
        top = self.commit_index[o][channel]
        log = self.log[o][channel]
        for anchor, src in self.source.items():
            if src != o:
                continue
            key = anchor, channel
            while self.sent[key] < top and (self.sent[key] + 1) in log:
                self.sent[key] += 1
                block = log[self.sent[key]]
                self.net.transmit(o, anchor, block.bytes, self.deliver_cb, (anchor, block),
                                  detail=f"block {channel}:{block.height}")

    # -- faults -----------------------------------------------------------

    def _on_crash(self, node):
        if node in self.source:
            self._replace_anchor(node)
            return
        if node not in self.log:
            return
        for anchor, src in list(self.source.items()):
            if src == node:
                self._reassign(anchor)
        if node == self.leader:
            self.leader = None
            self.electing = True
            self.acks.clear()
            self.sim.after(self.election_timeout, EventKind.TIMER, None, self._elect,
                           detail="election")

    def _replace_anchor(self, dead):
        """The next live peer of the org takes over block delivery from its own height."""
        org = self.topo.nodes[dead].org
        live = [p for p in self.topo.peers_by_org[org] if self.sim.alive(p)]
        src = self.source.pop(dead)
        if not live:
            return
        new = live[0]
        self.topo.anchors[org] = new
        self.source[new] = src
        for c in range(self.cfg.channel_count):
            self.sent[new, c] = self.ledger_height(new, c)
            self._serve(src, c)

    def _reassign(self, anchor):
        live = self.live_orderers()
        if not live:
            return
        i = self.orderers.index(self.source[anchor])
        n = len(self.orderers)
        for step in range(1, n + 1):
            cand = self.orderers[(i + step) % n]
            if self.sim.alive(cand):
                self.source[anchor] = cand
                break
        for c in range(self.cfg.channel_count):
            self._serve(self.source[anchor], c)

    def _elect(self):
        live = self.live_orderers()
        if len(live) < self.quorum:
            return              # no quorum: the service stays down
        leader = live[0]
        self.term += 1
        self.leader = leader
        self.electing = False
        self._make_batchers(leader)
        for c in range(self.cfg.channel_count):
            # entries appended under the old term but never committed
            log = self.log[leader][c]
            done = self.commit_index[leader][c]
            self.next_height[c] = done + 1
            for h in sorted(h for h in log if h > done):
                if h != self.next_height[c]:
                    break
                old = log[h]
                block = Block(h, old.txs, old.bytes, old.cut_reason, self.sim.now, self.term, c)
                self.next_height[c] = h + 1
                self._propose(leader, block)
            for o in self.orderers:
                stale = [h for h in self.log[o][c] if h >= self.next_height[c]]
                for h in stale:
                    del self.log[o][c][h]
        # buffered submissions: forward to the new leader, then cut at once
        for o in self.orderers:
            items, self.buffer[o] = self.buffer[o], []
            if not items or not self.sim.alive(o):
                continue
            if o == leader:
                self._catch_up(items)
            else:
                size = sum(s for _, _, s in items)
                self.net.transmit(o, leader, size, self._catch_up, (items,), detail="forward")

    def _catch_up(self, items):
        if self.electing:
            return
        touched = set()
        for tx, channel, size in items:
            self._enqueue(tx, channel, size)
            touched.add(channel)
        for c in sorted(touched):
            self.batchers[c].cut(CutReason.CATCH_UP)
