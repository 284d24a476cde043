"""Convergecast layer: rank-based parent choice, periodic traffic, forwarding."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

HOP_LIMIT = 16
# advertised ranks at or above this are treated as "no route"
MAX_RANK = 16
PARENT_WINDOW_S = 30.0
TRAFFIC_PERIOD_S = 6.0
TRAFFIC_PHASE_PER_ID_S = 0.1


@dataclass(frozen=True, order=True)
class AppPacketId:
    origin: int
    seq: int


class DropReason(str, Enum):
    DOWN = "down"
    QUEUE_OVERFLOW = "queue_overflow"
    RETRY_EXHAUSTED = "retry_exhausted"
    NO_PARENT = "no_parent"
    LOOP_GUARD = "loop_guard"
    DESYNC_FLUSH = "desync_flush"


@dataclass
class NeighborInfo:
    last_heard: int
    rank: int
    parent: int | None = None


@dataclass
class RoutingState:
    parent: int | None = None
    rank: int | None = None
    neighbors: dict[int, NeighborInfo] = field(default_factory=dict)

    def heard(self, node: int, asn: int, rank: int | None = None, parent: int | None = None) -> None:
        """Record a frame from ``node``; EBs carry rank and parent, ACKs only refresh."""
        info = self.neighbors.get(node)
        if rank is None:
            if info is not None:
                info.last_heard = asn
            return
        if info is None:
            self.neighbors[node] = NeighborInfo(asn, rank, parent)
        else:
            info.last_heard, info.rank, info.parent = asn, rank, parent

    def reset(self) -> None:
        self.parent = None
        self.rank = None
        self.neighbors.clear()


def traffic_slots(
    node: int,
    total_slots: int,
    boot_asn: int = 0,
    period_slots: int = 600,
    phase_slots_per_id: int = 10,
) -> range:
    """Generation instants of a node: one per period from boot, phase-shifted by id."""
    start = boot_asn + node * phase_slots_per_id
    return range(start, total_slots, period_slots)


class TrafficGenerator:
    """Per-origin packet source with a running sequence number."""

    __slots__ = ("origin", "slots", "index", "generated")

    def __init__(self, origin: int, slots: range):
        self.origin = origin
        self.slots = slots
        self.index = 0
        self.generated = 0

    @property
    def next_asn(self) -> int | None:
        return self.slots[self.index] if self.index < len(self.slots) else None

    def generate_traffic(self, asn: int) -> list[AppPacketId]:
        """All packets due at or before ``asn``."""
        out = []
        while self.index < len(self.slots) and self.slots[self.index] <= asn:
            out.append(AppPacketId(self.origin, self.index))
            self.index += 1
            self.generated += 1
        return out


KEPT, SWITCHED, DETACH = "kept", "switched", "detach"


def _eligible(info: NeighborInfo, nid: int, self_id: int, asn: int, window_slots: int) -> bool:
    if nid == self_id or asn - info.last_heard >= window_slots:
        return False
    return info.rank + 1 < MAX_RANK and info.parent != self_id


def select_parent(routing: RoutingState, self_id: int, asn: int, window_slots: int) -> str:
    """Re-evaluate the parent from the neighbor table.

    Eligible neighbors were heard within the window, advertise a rank whose
    successor stays below MAX_RANK, and do not advertise ``self_id`` as their
    parent. The minimum (rank, id) neighbor wins, except that a node keeps a
    still-fresh parent rather than moving to a worse rank. Without any eligible
    neighbor the parent is kept (desynchronization decides about leaving),
    unless the parent itself advertises an overflowing rank: then the node
    detaches.

    Returns KEPT, SWITCHED or DETACH.
    """
    best = None
    for nid, info in routing.neighbors.items():
        if not _eligible(info, nid, self_id, asn, window_slots):
            continue
        if best is None or (info.rank, nid) < (routing.neighbors[best].rank, best):
            best = nid
    current = routing.neighbors.get(routing.parent) if routing.parent is not None else None
    current_ok = current is not None and _eligible(current, routing.parent, self_id, asn, window_slots)
    if best is None:
        if current is not None and (current.rank + 1 >= MAX_RANK or current.parent == self_id):
            return DETACH
        return KEPT
    if current_ok and routing.neighbors[best].rank >= current.rank:
        best = routing.parent
    routing.rank = routing.neighbors[best].rank + 1
    if best == routing.parent:
        return KEPT
    routing.parent = best
    return SWITCHED


def forward(hops: int, parent: int | None) -> DropReason | None:
    """Forwarding verdict for a packet that has travelled ``hops`` links."""
    if hops > HOP_LIMIT:
        return DropReason.LOOP_GUARD
    if parent is None:
        return DropReason.NO_PARENT
    return None
