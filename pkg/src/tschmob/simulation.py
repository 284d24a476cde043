"""Slot-synchronous network run.

Only slots in which some node transmits, defers on a shared cell or has a timer
due can change state, so the run loop jumps straight between such slots. Passing
``skip_idle=False`` steps through every slot instead; both modes produce the same
event trace.
"""

from __future__ import annotations

from collections import Counter
from typing import Sequence

from .mac import DEFER, RX, TX, Frame, FrameKind, Node, SyncPolicy
from .metrics import NodeTrace, PacketLedger
from .mobility import MobilityTrace
from .netstack import TrafficGenerator, traffic_slots
from .phy import DEFAULT_RANGE, Fhs, RxResult, TxAttempt, arbitrate_slot
from .schedulers import MsfLite, make_scheduler
from .simcore import SLOT_DURATION, RngStream, SimClock, seconds_to_slots


class Simulation:
    def __init__(
        self,
        traces: Sequence[MobilityTrace],
        scheduler: str = "orchestra",
        *,
        seed: int = 0,
        duration: float = 4 * 3600.0,
        slot_duration: float = SLOT_DURATION,
        fhs: Fhs | None = None,
        policy: SyncPolicy | None = None,
        radio_range: float = DEFAULT_RANGE,
        link_loss: float = 0.0,
        traffic_period: float = 6.0,
        traffic_phase_per_id: float = 0.1,
        unicast_len: int = 17,
        coordinator: int = 0,
        boot_times: dict[int, float] | None = None,
        verbose: bool = False,
    ):
        self.clock = SimClock(slot_duration=slot_duration, sim_duration=duration)
        self.total_slots = self.clock.total_slots
        self.seed = seed
        self.fhs = fhs or Fhs()
        self.policy = policy or SyncPolicy()
        self.radio_range = radio_range
        self.link_loss = link_loss
        self.scheduler_name = scheduler
        kwargs = {"unicast_len": unicast_len} if scheduler.lower() != "msf" else {}
        self.scheduler = make_scheduler(scheduler, **kwargs)
        self.ledger = PacketLedger()
        self.events: list[tuple[int, int, str, str]] | None = [] if verbose else None
        self.phy_rng = RngStream(seed, ("phy",))
        self.slots_processed = 0

        period = seconds_to_slots(traffic_period, slot_duration)
        phase = seconds_to_slots(traffic_phase_per_id, slot_duration)
        boot_times = boot_times or {}
        self.nodes: list[Node] = []
        for tr in sorted(traces, key=lambda t: t.node):
            boot = seconds_to_slots(boot_times.get(tr.node, 0.0), slot_duration)
            is_coord = tr.node == coordinator
            traffic = None
            if not is_coord:
                traffic = TrafficGenerator(tr.node, traffic_slots(tr.node, self.total_slots, boot, period, phase))
            self.nodes.append(
                Node(
                    tr.node,
                    scheduler=self.scheduler,
                    fhs=self.fhs,
                    policy=self.policy,
                    rng=RngStream(seed, ("mac", tr.node)),
                    sink=self.ledger,
                    total_slots=self.total_slots,
                    slot_duration=slot_duration,
                    coordinator=is_coord,
                    boot_asn=boot,
                    traffic=traffic,
                    trace=tr,
                    log=self._log if verbose else None,
                )
            )
        self.by_id = {n.id: n for n in self.nodes}
        self.index = {n.id: i for i, n in enumerate(self.nodes)}
        if coordinator not in self.by_id:
            raise ValueError(f"coordinator {coordinator} has no mobility trace")
        self._refresh_children()

    # ------------------------------------------------------------------

    def _log(self, asn: int, node: int, event: str, detail: str) -> None:
        self.events.append((asn, node, event, detail))

    def event_log_lines(self) -> list[str]:
        return [f"{a},{n},{e},{d}" for a, n, e, d in self.events or ()]

    def _refresh_children(self) -> set[int]:
        """Recompute every node's children; returns indices whose set changed."""
        kids: dict[int, set] = {n.id: set() for n in self.nodes}
        for n in self.nodes:
            if n.joined and n.parent is not None and n.parent in kids and not n.is_coordinator:
                kids[n.parent].add(n.id)
        changed = set()
        for i, n in enumerate(self.nodes):
            fk = frozenset(kids[n.id])
            if fk != n.children:
                n.children = fk
                n.invalidate()
                changed.add(i)
        return changed

    def run(self, skip_idle: bool = True) -> "Simulation":
        nodes = self.nodes
        everyone = frozenset(range(len(nodes)))
        wake: list[int | None] = [None] * len(nodes)
        asn = 0
        awake = everyone
        end = self.total_slots
        while asn < end:
            touched, topology = self._process_slot(asn, awake)
            self.slots_processed += 1
            if not skip_idle:
                if topology:
                    self._refresh_children()
                asn += 1
                continue
            if topology:
                self._refresh_children()
                dirty = everyone
            else:
                dirty = touched | awake
            for i in dirty:
                wake[i] = nodes[i].next_wake(asn)
            pending = [w for w in wake if w is not None]
            if not pending:
                break
            asn = min(pending)
            awake = frozenset(i for i, w in enumerate(wake) if w == asn)
        self.clock.asn = min(asn, end - 1)
        return self

    def _process_slot(self, asn: int, awake: frozenset) -> tuple[set, bool]:
        """Run one slot. Only ``awake`` nodes can have timers due or transmit;
        the others are consulted only as potential listeners."""
        touched: set[int] = set()
        topology = False
        nodes = self.nodes

        msf = self.scheduler if isinstance(self.scheduler, MsfLite) else None
        if msf is not None and asn > 0:
            # bring usage windows up to the previous slot before anything changes cells
            for n in nodes:
                if n.joined and msf.account(n.ctx(), asn - 1, None, n.rng):
                    topology = True
            if topology:
                awake = frozenset(range(len(nodes)))

        for i in awake:
            if nodes[i].timers(asn):
                touched.add(i)

        if any(n.routing_changed for n in nodes):
            awake = awake | self._refresh_children()

        attempts: list[TxAttempt] = []
        listeners: list[tuple[int, int]] = []
        tx_cells = {}
        for i in sorted(awake):
            n = nodes[i]
            plan = n.execute_slot(asn)
            if plan is not None:
                kind, ch, frame, cell = plan
                if kind == TX:
                    n.on_transmit(asn, frame)
                    attempts.append(TxAttempt(n.id, ch, frame))
                    tx_cells[n.id] = cell
                    touched.add(i)
                    if self.events is not None:
                        self._log(asn, n.id, "tx", f"{frame.kind.value}->{frame.dst} ch={ch}")
                elif kind == RX:
                    listeners.append((n.id, ch))
            # a consumed backoff slot shows up as a changed backoff counter
            if n.backoff:
                touched.add(i)

        if attempts:
            for i, n in enumerate(nodes):
                if i in awake:
                    continue
                plan = n.execute_slot(asn, commit=False)
                if plan is None:
                    continue
                if plan[0] != RX:
                    raise RuntimeError(f"node {n.id} acts at asn {asn} without a scheduled wake-up")
                listeners.append((n.id, plan[1]))

        acked: dict[int, int] = {}
        if attempts and listeners:
            t = self.clock.time_of(asn)
            positions = {n.id: n.position(t) for n in nodes}
            for out in arbitrate_slot(attempts, listeners, positions, self.radio_range):
                if out.result is not RxResult.DELIVERED:
                    continue
                if self.link_loss > 0 and self.phy_rng.random() < self.link_loss:
                    continue
                rx = self.by_id[out.receiver]
                frame: Frame = out.frame
                touched.add(self.index[rx.id])
                if rx.joined:
                    if rx.on_receive(asn, frame):
                        acked[out.sender] = rx.id
                        if self.events is not None:
                            self._log(asn, rx.id, "rx", f"{frame.kind.value}<-{frame.src}")
                else:
                    rx.scan_step(asn, frame)

        for a in attempts:
            if a.frame.kind is FrameKind.EB:
                continue
            n = self.by_id[a.sender]
            if acked.get(a.sender) == a.frame.dst:
                n.on_ack(asn, a.frame)
            else:
                n.on_ack_missing(asn, a.frame, tx_cells[a.sender])

        if msf is not None:
            for n in nodes:
                if not n.joined:
                    continue
                ctx = n.ctx()
                cell = tx_cells.get(n.id)
                used = cell.peer if cell is not None and cell.peer >= 0 else None
                if msf.account(ctx, asn, used, n.rng):
                    topology = True
                if msf.sync_monitors(ctx, asn):
                    topology = True

        for n in nodes:
            if n.routing_changed:
                n.routing_changed = False
                topology = True
        return touched, topology

    # ------------------------------------------------------------------

    def node_traces(self) -> list[NodeTrace]:
        delivered = Counter(p.origin for p in self.ledger.delivered_ids)
        out = []
        for n in self.nodes:
            out.append(
                NodeTrace(
                    node=n.id,
                    total_slots=self.total_slots,
                    slot_duration=self.clock.slot_duration,
                    boot_asn=n.boot_asn,
                    phase_log=list(n.phase_log),
                    generated=self.ledger.generated_by[n.id],
                    delivered_unique=delivered[n.id],
                    tx_attempts=self.ledger.tx_attempts_by[n.id],
                    drops=dict(self.ledger.drops.get(n.id, {})),
                    in_flight=0,
                    coordinator=n.is_coordinator,
                )
            )
        # in-flight packets may sit in any node's queue
        inflight = Counter(p.origin for n in self.nodes for p in n.in_flight())
        for tr in out:
            tr.in_flight = inflight[tr.node]
        return out

    def stats(self) -> dict:
        agg = Counter()
        for n in self.nodes:
            agg.update(n.stats)
        agg["slots_processed"] = self.slots_processed
        agg["duplicates"] = self.ledger.duplicates
        if isinstance(self.scheduler, MsfLite):
            agg["msf_adds"] = self.scheduler.adds
            agg["msf_deletes"] = self.scheduler.deletes
            agg["msf_ignored_adds"] = self.scheduler.ignored_adds
        return dict(agg)
