"""Autonomous TSCH schedules: Orchestra (receiver-based), ALICE and an MSF-lite.

Every scheduler answers two questions for a node:

* ``cells_at(ctx, asn)`` -- the cells active in that slot, highest priority first;
* ``next_tx_candidate(ctx, asn, peers, eb)`` -- the earliest slot ``>= asn`` holding a
  Tx cell that could carry one of the pending frames. The MAC uses it to skip idle
  slots; the answer is only a candidate and is re-checked against ``cells_at``.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntFlag
from functools import cached_property, lru_cache
from typing import Iterable

from .simcore import RngStream, uniform_choice

BROADCAST = -1
ANY = -2

EB_SLOTFRAME_LEN = 397
BROADCAST_SLOTFRAME_LEN = 31
UNICAST_SLOTFRAME_LEN = 17
MSF_SLOTFRAME_LEN = 101

EB_CHANNEL_OFFSET = 0
BROADCAST_CHANNEL_OFFSET = 1

MASK64 = (1 << 64) - 1


class Opt(IntFlag):
    TX = 1
    RX = 2
    SHARED = 4
    EB = 8


@dataclass(frozen=True)
class Slotframe:
    name: str
    length: int
    priority: int


# plain-int option sets for the hot path; IntFlag arithmetic is slow
TX = int(Opt.TX)
RX = int(Opt.RX)
TX_EB = int(Opt.TX | Opt.EB)
TX_SHARED = int(Opt.TX | Opt.SHARED)
SHARED_ALL = int(Opt.TX | Opt.RX | Opt.SHARED)
BOOTSTRAP = int(Opt.TX | Opt.RX | Opt.SHARED | Opt.EB)


@dataclass(frozen=True)
class Cell:
    slot_offset: int
    channel_offset: int
    options: int
    peer: int
    slotframe: str = ""
    priority: int = 0

    def __post_init__(self):
        opts = int(self.options)
        object.__setattr__(self, "options", opts)
        object.__setattr__(self, "is_tx", bool(opts & TX))
        object.__setattr__(self, "is_rx", bool(opts & RX))
        object.__setattr__(self, "shared", bool(opts & Opt.SHARED))
        object.__setattr__(self, "eb_capable", bool(opts & Opt.EB))

    @property
    def flags(self) -> Opt:
        return Opt(self.options)


@lru_cache(maxsize=None)
def make_cell(slot: int, co: int, options: int, peer: int, slotframe: str, priority: int) -> Cell:
    return Cell(slot, co, options, peer, slotframe, priority)


@dataclass(frozen=True)
class NodeCtx:
    """What a scheduler may look at: identity, routing links and traffic peers."""

    node: int
    time_source: int | None = None
    parent: int | None = None
    children: frozenset = frozenset()
    tx_peers: frozenset = frozenset()
    n_channel_offsets: int = 4

    def __hash__(self) -> int:
        h = self.__dict__.get("_hash")
        if h is None:
            h = hash((self.node, self.time_source, self.parent, self.children, self.tx_peers, self.n_channel_offsets))
            object.__setattr__(self, "_hash", h)
        return h

    @cached_property
    def peers(self) -> tuple[int, ...]:
        """Unicast Tx neighbors: traffic peers plus the parent, sorted."""
        return tuple(_tx_peers(self))


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


@lru_cache(maxsize=None)
def _link_seed(sender: int, receiver: int, salt: int) -> int:
    return splitmix64(((sender & 0xFFFFF) << 44) | ((receiver & 0xFFFFF) << 24) | (salt & 0xFF) << 16)


def link_hash(sender: int, receiver: int, asfn: int, salt: int = 0) -> int:
    """64-bit mix of a directed link and slotframe number."""
    return splitmix64(_link_seed(sender, receiver, salt) ^ (asfn & MASK64))


def _next_at(asn: int, slot: int, length: int) -> int:
    return asn + ((slot - asn) % length)


def _tx_peers(ctx: NodeCtx) -> list[int]:
    peers = set(ctx.tx_peers)
    if ctx.parent is not None:
        peers.add(ctx.parent)
    peers.discard(ctx.node)
    return sorted(p for p in peers if p >= 0)


class Scheduler:
    name = "base"
    slotframes: tuple[Slotframe, ...] = ()

    def cells_at(self, ctx: NodeCtx, asn: int) -> list[Cell]:
        raise NotImplementedError

    def next_tx_candidate(self, ctx: NodeCtx, asn: int, peers: Iterable[int], eb: bool) -> int | None:
        raise NotImplementedError

    def hyperperiod(self) -> int:
        from math import lcm

        return lcm(*(sf.length for sf in self.slotframes))

    # MSF hooks; no-ops for the stateless schedulers
    def on_slot(self, node, asn: int) -> None:
        pass

    def forget(self, node_id: int) -> None:
        pass


class _OrchestraCommon(Scheduler):
    def __init__(self, unicast_len: int = UNICAST_SLOTFRAME_LEN):
        self.unicast_len = unicast_len
        self.slotframes = (
            Slotframe("eb", EB_SLOTFRAME_LEN, 0),
            Slotframe("broadcast", BROADCAST_SLOTFRAME_LEN, 1),
            Slotframe("unicast", unicast_len, 2),
        )

    def _common_cells(self, ctx: NodeCtx, asn: int) -> list[Cell]:
        cells = []
        eb_slot = asn % EB_SLOTFRAME_LEN
        if eb_slot == ctx.node % EB_SLOTFRAME_LEN:
            cells.append(make_cell(eb_slot, EB_CHANNEL_OFFSET, TX_EB, BROADCAST, "eb", 0))
        if ctx.time_source is not None and eb_slot == ctx.time_source % EB_SLOTFRAME_LEN:
            cells.append(make_cell(eb_slot, EB_CHANNEL_OFFSET, RX, ctx.time_source, "eb", 0))
        bc_slot = asn % BROADCAST_SLOTFRAME_LEN
        if bc_slot == ctx.node % BROADCAST_SLOTFRAME_LEN:
            cells.append(
                make_cell(
                    bc_slot,
                    BROADCAST_CHANNEL_OFFSET % ctx.n_channel_offsets,
                    SHARED_ALL,
                    BROADCAST,
                    "broadcast",
                    1,
                )
            )
        return cells

    def _next_eb(self, ctx: NodeCtx, asn: int) -> int:
        return _next_at(asn, ctx.node % EB_SLOTFRAME_LEN, EB_SLOTFRAME_LEN)


class OrchestraRB(_OrchestraCommon):
    """Receiver-based Orchestra: every node owns one Rx cell at ``id mod L``."""

    name = "orchestra"

    def rx_slot(self, node: int) -> int:
        return node % self.unicast_len

    def cells_at(self, ctx: NodeCtx, asn: int) -> list[Cell]:
        cells = self._common_cells(ctx, asn)
        L = self.unicast_len
        s = asn % L
        n_co = ctx.n_channel_offsets
        for m in ctx.peers:
            if m % L == s:
                cells.append(make_cell(s, m % n_co, TX_SHARED, m, "unicast", 2))
        if ctx.node % L == s:
            cells.append(make_cell(s, ctx.node % n_co, RX, ANY, "unicast", 2))
        return cells

    def next_tx_candidate(self, ctx: NodeCtx, asn: int, peers: Iterable[int], eb: bool) -> int | None:
        best = self._next_eb(ctx, asn) if eb else None
        L = self.unicast_len
        for m in peers:
            c = _next_at(asn, m % L, L)
            if best is None or c < best:
                best = c
        return best


class Alice(_OrchestraCommon):
    """Link-based unicast cells, rehashed every unicast slotframe."""

    name = "alice"

    def links(self, ctx: NodeCtx) -> list[tuple[int, int]]:
        """Directed links with a unicast cell: parent and children both ways, plus traffic peers."""
        return _alice_links(ctx)

    def link_cell(self, sender: int, receiver: int, asfn: int, n_co: int) -> tuple[int, int]:
        return (
            link_hash(sender, receiver, asfn, 0) % self.unicast_len,
            link_hash(sender, receiver, asfn, 1) % n_co,
        )

    def cells_at(self, ctx: NodeCtx, asn: int) -> list[Cell]:
        cells = self._common_cells(ctx, asn)
        L = self.unicast_len
        asfn, s = divmod(asn, L)
        tx, rx = [], []
        for a, b in self.links(ctx):
            if link_hash(a, b, asfn, 0) % L != s:
                continue
            co = link_hash(a, b, asfn, 1) % ctx.n_channel_offsets
            if a == ctx.node:
                tx.append(make_cell(s, co, TX, b, "unicast", 2))
            else:
                rx.append(make_cell(s, co, RX, a, "unicast", 2))
        return cells + tx + rx

    def next_tx_candidate(self, ctx: NodeCtx, asn: int, peers: Iterable[int], eb: bool) -> int | None:
        best = self._next_eb(ctx, asn) if eb else None
        L = self.unicast_len
        n_co = ctx.n_channel_offsets
        for m in peers:
            asfn = asn // L
            while True:
                slot, _ = self.link_cell(ctx.node, m, asfn, n_co)
                c = asfn * L + slot
                if c >= asn:
                    break
                asfn += 1
            if best is None or c < best:
                best = c
        return best


@lru_cache(maxsize=4096)
def _alice_links(ctx: NodeCtx) -> list[tuple[int, int]]:
    out = set()
    if ctx.parent is not None:
        out.add((ctx.node, ctx.parent))
        out.add((ctx.parent, ctx.node))
    for c in ctx.children:
        out.add((c, ctx.node))
        out.add((ctx.node, c))
    for m in ctx.tx_peers:
        if m >= 0 and m != ctx.node:
            out.add((ctx.node, m))
    return sorted(out)


class UsageMonitor:
    """Counts elapsed and used Tx-cell instances toward one neighbor.

    A decision is taken each time ``window`` instances have elapsed; the counters
    then restart.
    """

    __slots__ = ("window", "add_threshold", "delete_threshold", "elapsed", "used", "last_asn")

    def __init__(self, window: int = 64, add_threshold: float = 0.75, delete_threshold: float = 0.25, asn: int = 0):
        self.window = window
        self.add_threshold = add_threshold
        self.delete_threshold = delete_threshold
        self.elapsed = 0
        self.used = 0
        self.last_asn = asn

    def record(self, used: bool) -> None:
        self.elapsed += 1
        if used:
            self.used += 1

    def elapse(self, n: int) -> None:
        self.elapsed += n

    @property
    def full(self) -> bool:
        return self.elapsed >= self.window

    def decide(self, n_cells: int) -> int:
        """+1 to add a cell, -1 to delete one, 0 to keep; resets the window."""
        ratio = self.used / self.elapsed if self.elapsed else 0.0
        self.elapsed = 0
        self.used = 0
        if ratio >= self.add_threshold:
            return 1
        if ratio <= self.delete_threshold and n_cells > 1:
            return -1
        return 0


def _count_instances(slots: list[int], a: int, b: int, L: int) -> int:
    """Occurrences in the half-open ASN range ``(a, b]`` of any of ``slots``."""
    return sum((b - s) // L - (a - s) // L for s in slots)


def _kth_instance(slots: list[int], a: int, k: int, L: int) -> int:
    """ASN of the ``k``-th occurrence (1-based) after ``a`` of any of ``slots``."""
    slots = sorted(set(slots))
    n = len(slots)
    full, rem = divmod(k - 1, n)
    # occurrences strictly after a, in order
    base = a + 1
    frame, off = divmod(base, L)
    order = [s for s in slots if s >= off] + [s + L for s in slots if s < off]
    return frame * L + order[rem] + full * L


class MsfLite(Scheduler):
    """Autonomous Rx cell, shared slot 0 and locally adapted Tx cells per neighbor.

    Added cells are installed on both ends at once, standing in for a completed
    6P transaction.
    """

    name = "msf"

    def __init__(
        self,
        length: int = MSF_SLOTFRAME_LEN,
        window: int = 64,
        add_threshold: float = 0.75,
        delete_threshold: float = 0.25,
        max_cells: int = 8,
    ):
        self.length = length
        self.window = window
        self.add_threshold = add_threshold
        self.delete_threshold = delete_threshold
        self.max_cells = max_cells
        self.slotframes = (Slotframe("msf", length, 0),)
        # (owner, peer) -> negotiated (slot, channel offset) list, oldest first
        self.negotiated: dict[tuple[int, int], list[tuple[int, int]]] = {}
        self.monitors: dict[tuple[int, int], UsageMonitor] = {}
        self.ignored_adds = 0
        self.adds = 0
        self.deletes = 0

    def autonomous_slot(self, node: int) -> int:
        # slot 0 belongs to the bootstrap cell
        return 1 + node % (self.length - 1)

    def autonomous_cell(self, node: int, n_co: int) -> tuple[int, int]:
        return self.autonomous_slot(node), node % n_co

    def tx_slots(self, ctx: NodeCtx, m: int) -> list[int]:
        slots = [self.autonomous_slot(m)]
        slots.extend(s for s, _ in self.negotiated.get((ctx.node, m), ()))
        return slots

    def n_tx_cells(self, owner: int, peer: int) -> int:
        return 1 + len(self.negotiated.get((owner, peer), ()))

    def _rx_negotiated(self, node: int) -> list[tuple[int, int, int]]:
        out = []
        for (owner, peer), cells in self.negotiated.items():
            if peer == node:
                out.extend((s, co, owner) for s, co in cells)
        return out

    def cells_at(self, ctx: NodeCtx, asn: int) -> list[Cell]:
        L = self.length
        s = asn % L
        n_co = ctx.n_channel_offsets
        cells = []
        if s == 0:
            cells.append(make_cell(0, 0, BOOTSTRAP, ANY, "msf", 0))
        for m in ctx.peers:
            if self.autonomous_slot(m) == s:
                cells.append(make_cell(s, m % n_co, TX_SHARED, m, "msf", 0))
            for slot, co in self.negotiated.get((ctx.node, m), ()):
                if slot == s:
                    cells.append(make_cell(s, co, TX, m, "msf", 0))
        own_slot, own_co = self.autonomous_cell(ctx.node, n_co)
        if own_slot == s:
            cells.append(make_cell(s, own_co, RX, ANY, "msf", 0))
        for slot, co, owner in self._rx_negotiated(ctx.node):
            if slot == s:
                cells.append(make_cell(s, co, RX, owner, "msf", 0))
        return cells

    def next_tx_candidate(self, ctx: NodeCtx, asn: int, peers: Iterable[int], eb: bool) -> int | None:
        L = self.length
        best = _next_at(asn, 0, L) if eb else None
        for m in peers:
            for slot in self.tx_slots(ctx, m):
                c = _next_at(asn, slot, L)
                if best is None or c < best:
                    best = c
        return best

    # --- adaptation --------------------------------------------------------

    def sync_monitors(self, ctx: NodeCtx, asn: int) -> bool:
        """Create monitors for current Tx peers; drop cells and monitors of stale ones.

        Returns True when negotiated cells were removed.
        """
        peers = set(ctx.peers)
        for key in [k for k in self.monitors if k[0] == ctx.node and k[1] not in peers]:
            del self.monitors[key]
        stale = [k for k in self.negotiated if k[0] == ctx.node and k[1] not in peers]
        for key in stale:
            del self.negotiated[key]
        for m in peers:
            if (ctx.node, m) not in self.monitors:
                self.monitors[(ctx.node, m)] = UsageMonitor(
                    self.window, self.add_threshold, self.delete_threshold, asn
                )
        return bool(stale)

    def account(self, ctx: NodeCtx, asn: int, used_peer: int | None, rng: RngStream) -> bool:
        """Bring monitors up to ``asn`` (inclusive) and adapt on full windows.

        ``used_peer`` is the neighbor served by a Tx cell in this very slot.
        Returns True when the cell set changed.
        """
        changed = False
        L = self.length
        for (owner, m), mon in list(self.monitors.items()):
            if owner != ctx.node:
                continue
            slots = self.tx_slots(ctx, m)
            n = _count_instances(slots, mon.last_asn, asn, L)
            on_slot = (asn % L) in slots and asn > mon.last_asn
            if on_slot:
                n -= 1
            mon.elapse(n)
            if on_slot:
                mon.record(used_peer == m)
            mon.last_asn = asn
            if mon.full:
                decision = mon.decide(self.n_tx_cells(owner, m))
                if decision > 0:
                    changed |= self.add_cell(ctx, m, rng)
                elif decision < 0:
                    self.delete_cell(owner, m)
                    changed = True
        return changed

    def next_window_asn(self, ctx: NodeCtx) -> int | None:
        best = None
        for (owner, m), mon in self.monitors.items():
            if owner != ctx.node:
                continue
            k = mon.window - mon.elapsed
            c = _kth_instance(self.tx_slots(ctx, m), mon.last_asn, max(k, 1), self.length)
            if best is None or c < best:
                best = c
        return best

    def used_slots(self, node: int) -> set[int]:
        used = {0, self.autonomous_slot(node)}
        for (owner, peer), cells in self.negotiated.items():
            if owner == node or peer == node:
                used.update(s for s, _ in cells)
        for (owner, peer) in self.monitors:
            if owner == node:
                used.add(self.autonomous_slot(peer))
        return used

    def add_cell(self, ctx: NodeCtx, peer: int, rng: RngStream) -> bool:
        if self.n_tx_cells(ctx.node, peer) >= self.max_cells:
            self.ignored_adds += 1
            return False
        taken = self.used_slots(ctx.node) | self.used_slots(peer)
        free = [s for s in range(self.length) if s not in taken]
        if not free:
            self.ignored_adds += 1
            return False
        slot = free[uniform_choice(rng, len(free))]
        co = uniform_choice(rng, ctx.n_channel_offsets)
        self.negotiated.setdefault((ctx.node, peer), []).append((slot, co))
        self.adds += 1
        return True

    def delete_cell(self, owner: int, peer: int) -> None:
        cells = self.negotiated.get((owner, peer))
        if cells:
            cells.pop()
            self.deletes += 1
            if not cells:
                del self.negotiated[(owner, peer)]

    def forget(self, node_id: int) -> None:
        for key in [k for k in self.negotiated if node_id in k]:
            del self.negotiated[key]
        for key in [k for k in self.monitors if k[0] == node_id]:
            del self.monitors[key]


SCHEDULERS = {"orchestra": OrchestraRB, "alice": Alice, "msf": MsfLite}


def make_scheduler(name: str, **kwargs) -> Scheduler:
    try:
        cls = SCHEDULERS[name.lower()]
    except KeyError:
        raise ValueError(f"unknown scheduler {name!r}; choose from {sorted(SCHEDULERS)}") from None
    return cls(**kwargs)
