"""Shared builders for MAC-level tests."""

from tschmob.mac import Frame, FrameKind, Node, SyncPolicy
from tschmob.metrics import PacketLedger
from tschmob.mobility import MobilityTrace, Position, Waypoint
from tschmob.netstack import AppPacketId
from tschmob.phy import Fhs
from tschmob.schedulers import make_scheduler
from tschmob.simcore import RngStream

FOUR_HOURS = 4 * 3600.0


def static_trace(node, x, y, duration=FOUR_HOURS):
    return MobilityTrace(node, [Waypoint(0.0, Position(x, y)), Waypoint(duration, Position(x, y))])


def make_node(node_id, scheduler, *, coordinator=False, parent=None, rank=None, sink=None, policy=None, seed=0):
    """A node, force-joined under ``parent`` when given."""
    sched = make_scheduler(scheduler) if isinstance(scheduler, str) else scheduler
    n = Node(
        node_id,
        scheduler=sched,
        fhs=Fhs(),
        policy=policy or SyncPolicy(),
        rng=RngStream(seed, ("mac", node_id)),
        sink=sink or PacketSink(),
        total_slots=1_440_000,
        coordinator=coordinator,
    )
    if parent is not None:
        eb = Frame(FrameKind.EB, parent, -1, asn_stamp=0, rank=rank if rank is not None else 0, parent=None)
        assert n.scan_step(0, eb)
        n.eb_pending = False
    return n


def PacketSink():
    return PacketLedger()


def data_frame(src, dst, seq=0, origin=None):
    return Frame(FrameKind.DATA, src, dst, payload=AppPacketId(origin if origin is not None else src, seq))
