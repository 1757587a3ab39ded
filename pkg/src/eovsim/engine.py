"""Deterministic discrete-event engine.

Events are kept in a binary heap keyed on ``(time, seq)``; ``seq`` is a
monotone counter so that simultaneous events dispatch in insertion order.
"""

from __future__ import annotations

import hashlib
import heapq
import itertools
import random
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Iterable, Optional


class EventKind(str, Enum):
    MESSAGE = "message"
    TIMER = "timer"
    CLIENT_SEND = "client_send"
    CRASH = "crash"
    SERVICE = "service"


class SchedulingError(RuntimeError):
    """Raised when an event would be scheduled before the current time."""


class UnknownNodeError(KeyError):
    pass


@dataclass(slots=True)
class Event:
    time: float
    seq: int
    kind: EventKind
    node: Any = None
    action: Optional[Callable[..., None]] = field(default=None, repr=False)
    args: tuple = field(default=(), repr=False)
    src: Any = None
    detail: str = ""


@dataclass(slots=True)
class LogRecord:
    time: float
    seq: int
    kind: str
    node: Any
    detail: str
    src: Any = None
    dropped: bool = False

    def line(self) -> str:
        return f"{self.time!r},{self.seq},{self.kind},{self.node},{self.detail}"


class EventLog(list):
    """Ordered list of :class:`LogRecord`, one per dispatched event."""

    def lines(self) -> Iterable[str]:
        return (rec.line() for rec in self)

    def dump(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("time,seq,kind,node,detail\n")
            for line in self.lines():
                fh.write(line + "\n")

    def digest(self) -> str:
        h = hashlib.sha256()
        for line in self.lines():
            h.update(line.encode())
            h.update(b"\n")
        return h.hexdigest()


class Simulator:
    """Virtual clock plus priority event queue.

    ``keep_log`` controls whether every dispatch is appended to ``self.log``;
    benchmark runs switch it off and only keep ``dispatched`` as a count.
    """

    def __init__(self, seed: int = 0, keep_log: bool = True, nodes: Optional[Iterable] = None):
        self.now = 0.0
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.keep_log = keep_log
        self.log = EventLog()
        self.dispatched = 0
        self._queue: list = []
        self._seq = itertools.count()
        self._dead: dict = {}
        self._nodes = set(nodes) if nodes is not None else None
        self._crash_hooks: list = []
        self._rngs: dict = {}

    # -- scheduling -------------------------------------------------------

    def schedule(self, time: float, kind: EventKind, node=None, action=None,
                 args: tuple = (), src=None, detail: str = "") -> Event:
        if time < self.now:
            raise SchedulingError(f"event at t={time!r} scheduled in the past (now={self.now!r})")
        ev = Event(time, next(self._seq), kind, node, action, args, src, detail)
        heapq.heappush(self._queue, (time, ev.seq, ev))
        return ev

    def after(self, delay: float, kind: EventKind, node=None, action=None, args: tuple = (),
              src=None, detail: str = "") -> Event:
        return self.schedule(self.now + delay, kind, node, action, args, src, detail)

    def schedule_crash(self, node, t: float) -> Event:
        if self._nodes is not None and node not in self._nodes:
            raise UnknownNodeError(node)
        if t < 0:
            raise ValueError("crash time must be >= 0")
        return self.schedule(max(t, self.now), EventKind.CRASH, node, self._crash, (node,),
                             detail="crash")

    def on_crash(self, hook: Callable) -> None:
        self._crash_hooks.append(hook)

    def _crash(self, node) -> None:
        self._dead.setdefault(node, self.now)
        for hook in self._crash_hooks:
            hook(node)

    def alive(self, node) -> bool:
        return node not in self._dead

    def crashed_at(self, node) -> Optional[float]:
        return self._dead.get(node)

    # -- randomness -------------------------------------------------------

    def rng(self, node) -> random.Random:
        """Per-node generator derived from the run seed and the node id."""
        r = self._rngs.get(node)
        if r is None:
            key = hashlib.sha256(f"{self.seed}:{node}".encode()).digest()
            r = random.Random(int.from_bytes(key[:8], "big"))
            self._rngs[node] = r
        return r

    # -- execution --------------------------------------------------------

    def pending(self) -> int:
        return len(self._queue)

    def peek_time(self) -> Optional[float]:
        return self._queue[0][0] if self._queue else None

    def run_until(self, t_end: float) -> EventLog:
        """Dispatch every event with ``time <= t_end``.

        Returns the records dispatched during this call. Events owned by, or
        sent from, a crashed node are consumed but not executed.
        """
        if t_end < self.now:
            raise SchedulingError(f"run_until({t_end!r}) is before now={self.now!r}")
        out = EventLog()
        queue = self._queue
        dead = self._dead
        keep = self.keep_log
        while queue and queue[0][0] <= t_end:
            time, seq, ev = heapq.heappop(queue)
            self.now = time
            dropped = ev.kind is not EventKind.CRASH and (ev.node in dead or ev.src in dead)
            if keep:
                rec = LogRecord(time, seq, ev.kind.value, ev.node, ev.detail, ev.src, dropped)
                out.append(rec)
                self.log.append(rec)
            self.dispatched += 1
            if not dropped and ev.action is not None:
                ev.action(*ev.args)
        self.now = t_end
        return out

    def run(self) -> EventLog:
        """Run until the queue is exhausted."""
        out = EventLog()
        while self._queue:
            out.extend(self.run_until(self._queue[0][0]))
        return out
