"""Per-node TSCH MAC: scanning and joining, slot execution, retransmissions, sync."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from enum import Enum
from typing import Callable

from . import netstack
from .netstack import AppPacketId, DropReason, RoutingState, TrafficGenerator
from .phy import Fhs, channel_for
from .schedulers import ANY, BROADCAST, Cell, NodeCtx, Scheduler, splitmix64
from .simcore import RngStream, seconds_to_slots


class Phase(str, Enum):
    UNJOINED = "UNJOINED"
    SCANNING = "SCANNING"
    JOINED = "JOINED"


class FrameKind(str, Enum):
    EB = "EB"
    DATA = "DATA"
    ACK = "ACK"
    KEEPALIVE = "KEEPALIVE"


@dataclass(slots=True)
class Frame:
    kind: FrameKind
    src: int
    dst: int
    asn_stamp: int | None = None
    payload: AppPacketId | None = None
    rank: int | None = None
    # EBs also advertise the sender's parent so children can avoid 2-hop loops
    parent: int | None = None
    hops: int = 0
    retries: int = 0


@dataclass(frozen=True)
class SyncPolicy:
    keepalive_period: float = 12.0
    desync_timeout: float = 36.0
    max_retx: int = 8
    backoff_exponent_min: int = 1
    backoff_exponent_max: int = 7
    eb_period: float = 4.0
    eb_jitter: float = 0.10
    scan_dwell: float = 1.0
    queue_capacity: int = 16
    parent_window: float = netstack.PARENT_WINDOW_S

    def __post_init__(self):
        if self.desync_timeout <= self.keepalive_period:
            raise ValueError("desync timeout must exceed the keep-alive period")
        if not 0 <= self.backoff_exponent_min <= self.backoff_exponent_max:
            raise ValueError("bad backoff exponent range")
        if self.max_retx < 0 or self.queue_capacity < 1:
            raise ValueError("max_retx must be >= 0 and queue_capacity >= 1")
        if self.eb_period <= 0 or self.scan_dwell <= 0 or self.parent_window <= 0:
            raise ValueError("EB period, scan dwell and parent window must be positive")
        if not 0 <= self.eb_jitter < 1:
            raise ValueError("EB jitter must be in [0, 1)")


class PacketSink:
    """Receives packet-lifecycle notifications; the metrics ledger implements it."""

    def generated(self, pid: AppPacketId) -> None: ...
    def delivered(self, pid: AppPacketId) -> None: ...
    def dropped(self, pid: AppPacketId, reason: DropReason) -> None: ...
    def tx_attempt(self, pid: AppPacketId) -> None: ...


# plan kinds returned by Node.execute_slot
TX, RX, DEFER = "tx", "rx", "defer"


class Node:
    """MAC and routing state of one mote."""

    def __init__(
        self,
        node_id: int,
        *,
        scheduler: Scheduler,
        fhs: Fhs,
        policy: SyncPolicy,
        rng: RngStream,
        sink: PacketSink,
        total_slots: int,
        slot_duration: float = 0.010,
        coordinator: bool = False,
        boot_asn: int = 0,
        traffic: TrafficGenerator | None = None,
        trace=None,
        log: Callable[[int, int, str, str], None] | None = None,
    ):
        self.id = node_id
        self.scheduler = scheduler
        self.fhs = fhs
        self.policy = policy
        self.rng = rng
        self.sink = sink
        self.total_slots = total_slots
        self.slot_duration = slot_duration
        self.is_coordinator = coordinator
        self.boot_asn = boot_asn
        self.traffic = traffic
        self.trace = trace
        self.log = log

        s = lambda sec: seconds_to_slots(sec, slot_duration)  # noqa: E731
        self.ka_slots = s(policy.keepalive_period)
        self.desync_slots = s(policy.desync_timeout)
        self.dwell_slots = max(1, s(policy.scan_dwell))
        self.parent_window_slots = s(policy.parent_window)
        self.eb_period_slots = s(policy.eb_period)

        self.phase = Phase.UNJOINED
        self.routing = RoutingState()
        self.time_source: int | None = None
        self.last_sync_asn = 0
        self.queues: dict[int, deque] = {}
        self.eb_pending = False
        self.next_eb_asn: int | None = None
        self.ka_pending = False
        self.backoff: dict[int, list[int]] = {}
        self.scan_start_asn = boot_asn
        self.scan_salt = 0
        self.join_asn: int | None = None
        self.phase_log: list[tuple[int, Phase]] = []
        self.children: frozenset = frozenset()
        self.routing_changed = False
        self._ctx: NodeCtx | None = None

        self.stats = {
            "eb_tx": 0,
            "ka_tx": 0,
            "data_tx": 0,
            "ka_dropped": 0,
            "queue_overflow": 0,
            "joins": 0,
            "leaves": 0,
            "max_queue": 0,
        }

        if coordinator:
            self._set_phase(boot_asn, Phase.JOINED)
            self.join_asn = boot_asn
            self.routing.rank = 0
            self._start_eb(boot_asn)
        else:
            self._begin_scan(boot_asn)

    # --- helpers -----------------------------------------------------------

    def _emit(self, asn: int, event: str, detail: str = "") -> None:
        if self.log is not None:
            self.log(asn, self.id, event, detail)

    def _set_phase(self, asn: int, phase: Phase) -> None:
        self.phase = phase
        self.phase_log.append((asn, phase))

    @property
    def joined(self) -> bool:
        return self.phase is Phase.JOINED

    @property
    def rank(self) -> int | None:
        return self.routing.rank

    @property
    def parent(self) -> int | None:
        return self.routing.parent

    def ctx(self) -> NodeCtx:
        if self._ctx is None:
            self._ctx = NodeCtx(
                node=self.id,
                time_source=self.time_source,
                parent=self.routing.parent if not self.is_coordinator else None,
                children=self.children,
                tx_peers=frozenset(m for m, q in self.queues.items() if q),
                n_channel_offsets=len(self.fhs),
            )
        return self._ctx

    def invalidate(self) -> None:
        self._ctx = None

    def pending_peers(self) -> list[int]:
        return [m for m, q in self.queues.items() if q]

    def queued_frames(self) -> int:
        return sum(len(q) for q in self.queues.values())

    def enqueue(self, frame: Frame) -> bool:
        q = self.queues.setdefault(frame.dst, deque())
        if len(q) >= self.policy.queue_capacity:
            self.stats["queue_overflow"] += 1
            if frame.payload is not None:
                self.sink.dropped(frame.payload, DropReason.QUEUE_OVERFLOW)
            return False
        q.append(frame)
        self.stats["max_queue"] = max(self.stats["max_queue"], len(q))
        self._ctx = None
        return True

    def _dequeue(self, peer: int) -> Frame:
        q = self.queues[peer]
        frame = q.popleft()
        if frame.kind is FrameKind.KEEPALIVE:
            self.ka_pending = False
        if not q:
            del self.queues[peer]
            self.backoff.pop(peer, None)
        self._ctx = None
        return frame

    def _begin_scan(self, asn: int) -> None:
        self._set_phase(asn, Phase.SCANNING)
        self.scan_start_asn = asn
        self.scan_salt = self.rng.uniform_choice(1 << 62)

    def scan_channel(self, asn: int) -> int:
        """Listening channel while scanning: a random FHS channel per dwell.

        Derived by hashing the dwell index, so it is a pure function of ``asn``.
        In-order cycling would phase-lock with slotframes whose length is close
        to a multiple of the dwell and miss the same EBs over and over.
        """
        dwell = (asn - self.scan_start_asn) // self.dwell_slots
        return self.fhs.channels[splitmix64(self.scan_salt ^ dwell) % len(self.fhs)]

    # --- joining -----------------------------------------------------------

    def scan_step(self, asn: int, frame: Frame | None) -> bool:
        """Handle a frame delivered while scanning; joins on an EB."""
        if self.phase not in (Phase.UNJOINED, Phase.SCANNING):
            return False
        if frame is None or frame.kind is not FrameKind.EB:
            return False
        if frame.rank is None or frame.rank + 1 >= netstack.MAX_RANK or frame.parent == self.id:
            return False
        self._set_phase(asn, Phase.JOINED)
        self.time_source = frame.src
        self.routing.heard(frame.src, frame.asn_stamp, frame.rank, frame.parent)
        self.routing.parent = frame.src
        self.routing.rank = frame.rank + 1
        self.last_sync_asn = asn
        if self.join_asn is None:
            self.join_asn = asn
        self.stats["joins"] += 1
        self.routing_changed = True
        self._ctx = None
        self._start_eb(asn)
        self._emit(asn, "join", f"ts={frame.src} rank={self.routing.rank}")
        return True

    def leave(self, asn: int, reason: str = "desync") -> None:
        self._begin_scan(asn)
        for q in self.queues.values():
            for f in q:
                if f.payload is not None:
                    self.sink.dropped(f.payload, DropReason.DESYNC_FLUSH)
        self.queues.clear()
        self.backoff.clear()
        self.eb_pending = False
        self.next_eb_asn = None
        self.ka_pending = False
        self.time_source = None
        self.routing.reset()
        self.scheduler.forget(self.id)
        self.stats["leaves"] += 1
        self.routing_changed = True
        self._ctx = None
        self._emit(asn, "leave", reason)

    # --- timers ------------------------------------------------------------

    def _start_eb(self, asn: int) -> None:
        # the first EB waits a random delay below the shortest jittered period
        self.eb_pending = False
        shortest = int(self.eb_period_slots * (1 - self.policy.eb_jitter))
        self.next_eb_asn = asn + self.rng.uniform_choice(max(1, shortest))

    def _eb_interval(self) -> int:
        j = self.policy.eb_jitter
        return max(1, int(round(self.eb_period_slots * self.rng.uniform(1 - j, 1 + j))))

    def generate_eb(self, asn: int) -> bool:
        if not self.joined or self.next_eb_asn is None or asn < self.next_eb_asn:
            return False
        # one EB in flight at most; a still-pending EB is simply refreshed
        self.eb_pending = True
        self.next_eb_asn = asn + self._eb_interval()
        return True

    def _ka_due(self) -> bool:
        # queued frames to the time source already solicit ACKs, so no KA is needed
        return not self.ka_pending and self.time_source is not None and not self.queues.get(self.time_source)

    def sync_maintenance(self, asn: int) -> bool:
        if not self.joined or self.is_coordinator:
            return False
        if asn - self.last_sync_asn >= self.desync_slots:
            self.leave(asn)
            return True
        if asn - self.last_sync_asn >= self.ka_slots and self._ka_due():
            self.ka_pending = True
            self.enqueue(Frame(FrameKind.KEEPALIVE, self.id, self.time_source))
            return True
        return False

    def check_parent(self, asn: int) -> bool:
        if not self.joined or self.is_coordinator or self.routing.parent is None:
            return False
        info = self.routing.neighbors.get(self.routing.parent)
        if info is not None and asn - info.last_heard < self.parent_window_slots:
            return False
        return self.reselect_parent(asn)

    def reselect_parent(self, asn: int) -> bool:
        if self.is_coordinator or not self.joined:
            return False
        old_parent, old_rank = self.routing.parent, self.routing.rank
        verdict = netstack.select_parent(self.routing, self.id, asn, self.parent_window_slots)
        if verdict is netstack.DETACH:
            self.leave(asn, f"detach from {old_parent}")
            return True
        changed = verdict is netstack.SWITCHED
        if changed:
            self.time_source = self.routing.parent
            info = self.routing.neighbors[self.routing.parent]
            self.last_sync_asn = max(self.last_sync_asn, info.last_heard)
            self.routing_changed = True
            self._emit(asn, "parent", f"{old_parent}->{self.routing.parent} rank={self.routing.rank}")
        if changed or old_rank != self.routing.rank:
            self._ctx = None
        return changed

    def generate_traffic(self, asn: int) -> bool:
        if self.traffic is None:
            return False
        fired = False
        for pid in self.traffic.generate_traffic(asn):
            fired = True
            self.sink.generated(pid)
            if self.joined and self.routing.parent is not None:
                self.enqueue(Frame(FrameKind.DATA, self.id, self.routing.parent, payload=pid))
            else:
                self.sink.dropped(pid, DropReason.DOWN)
        return fired

    def timers(self, asn: int) -> bool:
        """Run every timer due at ``asn``; True if any state changed."""
        fired = self.sync_maintenance(asn)
        fired |= self.check_parent(asn)
        fired |= self.generate_eb(asn)
        fired |= self.generate_traffic(asn)
        return fired

    def next_timer(self, asn: int) -> int | None:
        """Earliest slot after ``asn`` at which a timer fires."""
        cands = []
        if self.traffic is not None and self.traffic.next_asn is not None:
            cands.append(self.traffic.next_asn)
        if self.joined:
            if self.next_eb_asn is not None:
                cands.append(self.next_eb_asn)
            if not self.is_coordinator:
                cands.append(self.last_sync_asn + self.desync_slots)
                if self._ka_due():
                    cands.append(self.last_sync_asn + self.ka_slots)
                info = self.routing.neighbors.get(self.routing.parent)
                if info is not None and asn - info.last_heard < self.parent_window_slots:
                    cands.append(info.last_heard + self.parent_window_slots)
            window_end = getattr(self.scheduler, "next_window_asn", None)
            if window_end is not None:
                w = window_end(self.ctx())
                if w is not None:
                    cands.append(w)
        if not cands:
            return None
        return max(min(cands), asn + 1)

    # --- slot execution ----------------------------------------------------

    def _frame_for(self, cell: Cell) -> Frame | None:
        if cell.eb_capable and self.eb_pending:
            return Frame(
                FrameKind.EB,
                self.id,
                BROADCAST,
                rank=self.routing.rank,
                parent=self.routing.parent,
            )
        if cell.peer >= 0:
            q = self.queues.get(cell.peer)
            if q:
                return q[0]
        return None

    def execute_slot(self, asn: int, cells: list[Cell] | None = None, commit: bool = True):
        """Decide this slot's action.

        Returns ``(TX, channel, frame, cell)``, ``(RX, channel, None, cell)``,
        ``(DEFER, ...)`` (peek mode only) or None for sleep. With ``commit`` a
        pending shared-cell backoff is consumed and the next cell is tried.
        """
        if self.phase is not Phase.JOINED:
            if self.phase is Phase.SCANNING:
                return (RX, self.scan_channel(asn), None, None)
            return None
        if cells is None:
            cells = self.scheduler.cells_at(self.ctx(), asn)
        for cell in cells:
            if cell.is_tx:
                frame = self._frame_for(cell)
                if frame is not None:
                    if frame.kind is not FrameKind.EB and cell.shared:
                        bo = self.backoff.get(cell.peer)
                        if bo is not None and bo[1] > 0:
                            if not commit:
                                return (DEFER, None, None, cell)
                            bo[1] -= 1
                            continue
                    ch = channel_for(asn, cell.channel_offset, self.fhs)
                    return (TX, ch, frame, cell)
            if cell.is_rx:
                return (RX, channel_for(asn, cell.channel_offset, self.fhs), None, cell)
        return None

    def next_tx_event(self, asn: int, limit: int = 5000) -> int | None:
        """First slot after ``asn`` where this node transmits or defers."""
        if not self.joined:
            return None
        peers = self.pending_peers()
        if not peers and not self.eb_pending:
            return None
        ctx = self.ctx()
        a = asn + 1
        for _ in range(limit):
            c = self.scheduler.next_tx_candidate(ctx, a, peers, self.eb_pending)
            if c is None:
                return None
            plan = self.execute_slot(c, commit=False)
            if plan is not None and plan[0] != RX:
                return c
            a = c + 1
        return a

    def next_wake(self, asn: int) -> int | None:
        t = self.next_timer(asn)
        x = self.next_tx_event(asn)
        if t is None:
            return x
        if x is None:
            return t
        return min(t, x)

    # --- outcomes ----------------------------------------------------------

    def on_transmit(self, asn: int, frame: Frame) -> None:
        if frame.kind is FrameKind.EB:
            frame.asn_stamp = asn
            self.eb_pending = False
            self.stats["eb_tx"] += 1
        elif frame.kind is FrameKind.DATA:
            self.stats["data_tx"] += 1
            self.sink.tx_attempt(frame.payload)
        elif frame.kind is FrameKind.KEEPALIVE:
            self.stats["ka_tx"] += 1

    def on_ack(self, asn: int, frame: Frame) -> None:
        self._dequeue(frame.dst)
        self.backoff.pop(frame.dst, None)
        self.routing.heard(frame.dst, asn)
        if frame.dst == self.time_source:
            self.last_sync_asn = asn
        # a refreshed neighbor may replace a stale parent
        self.check_parent(asn)

    def on_ack_missing(self, asn: int, frame: Frame, cell: Cell) -> bool:
        """Retry bookkeeping; returns True if the frame was dropped."""
        frame.retries += 1
        if frame.retries > self.policy.max_retx:
            self._dequeue(frame.dst)
            self.backoff.pop(frame.dst, None)
            if frame.payload is not None:
                self.sink.dropped(frame.payload, DropReason.RETRY_EXHAUSTED)
            elif frame.kind is FrameKind.KEEPALIVE:
                self.stats["ka_dropped"] += 1
            self._emit(asn, "drop", f"{frame.kind.value} to {frame.dst} after {frame.retries} tx")
            return True
        if cell is not None and cell.shared:
            lo, hi = self.policy.backoff_exponent_min, self.policy.backoff_exponent_max
            bo = self.backoff.setdefault(frame.dst, [lo - 1, 0])
            bo[0] = min(max(bo[0] + 1, lo), hi)
            bo[1] = self.rng.uniform_choice(1 << bo[0])
        return False

    def on_receive(self, asn: int, frame: Frame) -> bool:
        """Handle a frame delivered while joined; returns True if it must be ACKed."""
        if frame.kind is FrameKind.EB:
            self.routing.heard(frame.src, asn, frame.rank, frame.parent)
            if frame.src == self.time_source:
                self.last_sync_asn = asn
            if not self.is_coordinator:
                self.reselect_parent(asn)
            return False
        if frame.dst != self.id or frame.kind is FrameKind.ACK:
            return False
        self.routing.heard(frame.src, asn)
        self.check_parent(asn)
        if not self.joined:
            return False
        if frame.kind is FrameKind.DATA:
            hops = frame.hops + 1
            if self.is_coordinator:
                self.sink.delivered(frame.payload)
            else:
                verdict = netstack.forward(hops, self.routing.parent)
                if verdict is not None:
                    self.sink.dropped(frame.payload, verdict)
                else:
                    self.enqueue(Frame(FrameKind.DATA, self.id, self.routing.parent, payload=frame.payload, hops=hops))
        return True

    def position(self, t: float):
        return self.trace.position_at(min(t, self.trace.duration))

    def in_flight(self) -> list[AppPacketId]:
        return [f.payload for q in self.queues.values() for f in q if f.payload is not None]
