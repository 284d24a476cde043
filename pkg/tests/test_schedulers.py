import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from helpers import data_frame, make_node
from tschmob.mac import RX, TX
from tschmob.phy import Fhs, channel_for
from tschmob.schedulers import (
    ANY,
    BROADCAST,
    Alice,
    MsfLite,
    NodeCtx,
    Opt,
    OrchestraRB,
    UsageMonitor,
    link_hash,
    make_scheduler,
    splitmix64,
)
from tschmob.simcore import RngStream


def unicast(cells):
    return [c for c in cells if c.slotframe == "unicast"]


# --- Orchestra ----------------------------------------------------------------


def test_orchestra_rx_slot_is_id_mod_17_exhaustive():
    s = OrchestraRB()
    for node in range(10_001):
        ctx = NodeCtx(node)
        slots = [asn for asn in range(17) if any(c.is_rx for c in unicast(s.cells_at(ctx, asn)))]
        assert slots == [node % 17]
        assert s.rx_slot(node) == node % 17


def test_orchestra_tx_cell_toward_parent():
    s = OrchestraRB()
    ctx = NodeCtx(5, time_source=9, parent=9)
    tx = [c for asn in range(17) for c in unicast(s.cells_at(ctx, asn)) if c.is_tx]
    assert len(tx) == 1
    assert (tx[0].slot_offset, tx[0].peer, tx[0].channel_offset) == (9, 9, 1)
    assert tx[0].shared


def test_orchestra_rx_hash_collision_split_by_channel_offset():
    s = OrchestraRB()
    a, b = unicast(s.cells_at(NodeCtx(5), 5)), unicast(s.cells_at(NodeCtx(22), 22))
    assert a[0].slot_offset == b[0].slot_offset == 5
    assert a[0].channel_offset != b[0].channel_offset


def test_idle_slot_has_no_cells():
    s = OrchestraRB()
    # node 3 alone: EB Tx at 3 mod 397, broadcast at 3 mod 31, Rx at 3 mod 17
    assert s.cells_at(NodeCtx(3), 4) == []


def test_eb_cell_listed_before_unicast():
    s = OrchestraRB()
    # node 0: EB slot 0, broadcast slot 0, unicast Rx slot 0 all coincide at asn 0
    cells = s.cells_at(NodeCtx(0), 0)
    assert [c.slotframe for c in cells] == ["eb", "broadcast", "unicast"]
    assert cells[0].eb_capable and cells[0].peer == BROADCAST


def test_slotframe_priorities_unique():
    for name in ("orchestra", "alice", "msf"):
        prios = [sf.priority for sf in make_scheduler(name).slotframes]
        assert len(prios) == len(set(prios))


def test_orchestra_hyperperiod():
    assert OrchestraRB().hyperperiod() == 397 * 31 * 17


# --- ALICE --------------------------------------------------------------------


def test_splitmix64_reference_values():
    # first outputs of the reference splitmix64 generator seeded with 0
    assert splitmix64(0) == 0xE220A8397B1DCDAF
    state = 0x9E3779B97F4A7C15
    assert splitmix64(state) == 0x6E789E6AA1B965F4


def line_ctxs():
    return [
        NodeCtx(0, children=frozenset({1})),
        NodeCtx(1, time_source=0, parent=0, children=frozenset({2}), tx_peers=frozenset({0})),
        NodeCtx(2, time_source=1, parent=1, tx_peers=frozenset({1})),
    ]


def alice_map(s, ctxs, asfn, L=17):
    return tuple(tuple(unicast(s.cells_at(ctx, asfn * L + k))) for ctx in ctxs for k in range(L))


def test_alice_constant_within_asfn_and_pure():
    s = Alice()
    ctxs = line_ctxs()
    for asfn in range(50):
        for ctx in ctxs:
            for k in range(17):
                asn = asfn * 17 + k
                assert s.cells_at(ctx, asn) == s.cells_at(ctx, asn)
        slots = {(a, b): s.link_cell(a, b, asfn, 4) for a, b in [(1, 0), (0, 1), (2, 1), (1, 2)]}
        for a, b in slots:
            assert slots[(a, b)] == s.link_cell(a, b, asfn, 4)


def test_alice_cells_match_on_both_link_ends():
    s = Alice()
    ctxs = line_ctxs()
    for asn in range(17 * 40):
        tx = {(ctx.node, c.peer, c.channel_offset) for ctx in ctxs for c in unicast(s.cells_at(ctx, asn)) if c.is_tx}
        rx = {(c.peer, ctx.node, c.channel_offset) for ctx in ctxs for c in unicast(s.cells_at(ctx, asn)) if c.is_rx}
        assert tx == rx


def test_alice_rehash_changes_at_least_half_of_consecutive_frames():
    s = Alice()
    two = [NodeCtx(0, children=frozenset({1})), NodeCtx(1, time_source=0, parent=0, tx_peers=frozenset({0}))]
    for ctxs in (two, line_ctxs()):
        maps = [alice_map(s, ctxs, k) for k in range(1001)]
        differing = sum(1 for a, b in zip(maps, maps[1:]) if a != b)
        assert differing >= 500


def test_alice_directed_links_are_independent():
    s = Alice()
    same = sum(1 for k in range(2000) if s.link_cell(3, 1, k, 4) == s.link_cell(1, 3, k, 4))
    # independent uniform cells coincide with probability 1/68
    assert same < 2000 * 3 / 68


def test_alice_link_hash_salts_differ():
    assert link_hash(1, 2, 5, 0) != link_hash(1, 2, 5, 1)


# --- MSF-lite -----------------------------------------------------------------


def test_msf_fresh_node_cells():
    s = MsfLite()
    ctx = NodeCtx(7)
    cells = [c for asn in range(101) for c in s.cells_at(ctx, asn)]
    assert len(cells) == 2
    boot, own = cells
    assert boot.slot_offset == 0 and boot.flags == Opt.TX | Opt.RX | Opt.SHARED | Opt.EB and boot.peer == ANY
    assert own.slot_offset == s.autonomous_slot(7) and own.flags == Opt.RX and own.channel_offset == 7 % 4


def drive_window(s, ctx, used_pattern, start_frame=0):
    """Feed one Tx-cell instance per entry of ``used_pattern`` toward the parent."""
    rng = RngStream(0, ("mac", ctx.node))
    changed = []
    slot = s.autonomous_slot(ctx.parent)
    for k, used in enumerate(used_pattern):
        asn = (start_frame + k) * s.length + slot
        changed.append(s.account(ctx, asn, ctx.parent if used else None, rng))
    return changed


@pytest.mark.parametrize("used,adds", [(48, 1), (47, 0), (64, 1)])
def test_msf_add_threshold_is_exactly_75_percent(used, adds):
    s = MsfLite()
    ctx = NodeCtx(1, time_source=0, parent=0, tx_peers=frozenset({0}))
    s.sync_monitors(ctx, 0)
    pattern = [True] * used + [False] * (64 - used)
    changed = drive_window(s, ctx, pattern)
    assert s.adds == adds
    assert s.n_tx_cells(1, 0) == 1 + adds
    assert any(changed) == bool(adds)
    assert changed[:-1] == [False] * 63


def _two_cell_state():
    s = MsfLite()
    ctx = NodeCtx(1, time_source=0, parent=0, tx_peers=frozenset({0}))
    s.sync_monitors(ctx, 0)
    s.negotiated[(1, 0)] = [(50, 2)]
    return s, ctx


def _drive_two_cells(s, ctx, used):
    # with the extra cell at slot 50 a window of 64 spans 32 slotframes
    rng = RngStream(0, ("mac", 1))
    left = used
    for k in range(32):
        for slot in (s.autonomous_slot(0), 50):
            asn = k * s.length + slot
            s.account(ctx, asn, 0 if left > 0 else None, rng)
            left -= 1


@pytest.mark.parametrize("used,deletes", [(16, 1), (17, 0), (0, 1)])
def test_msf_delete_threshold_is_exactly_25_percent(used, deletes):
    s, ctx = _two_cell_state()
    _drive_two_cells(s, ctx, used)
    assert s.deletes == deletes
    assert s.n_tx_cells(1, 0) == 2 - deletes


def test_msf_never_deletes_last_cell():
    s = MsfLite()
    ctx = NodeCtx(1, time_source=0, parent=0, tx_peers=frozenset({0}))
    s.sync_monitors(ctx, 0)
    drive_window(s, ctx, [False] * 64)
    assert s.deletes == 0 and s.n_tx_cells(1, 0) == 1


def test_msf_cell_cap_and_full_schedule_counted():
    s = MsfLite(max_cells=2)
    ctx = NodeCtx(1, time_source=0, parent=0, tx_peers=frozenset({0}))
    s.sync_monitors(ctx, 0)
    drive_window(s, ctx, [True] * 64)
    assert s.n_tx_cells(1, 0) == 2
    rng = RngStream(0, ("mac", 1))
    assert not s.add_cell(ctx, 0, rng)
    assert s.ignored_adds == 1

    tiny = MsfLite(length=3)
    ctx2 = NodeCtx(1, time_source=0, parent=0, tx_peers=frozenset({0}))
    tiny.sync_monitors(ctx2, 0)
    # slots 0 (bootstrap), 1 (node 0 autonomous) and 2 (node 1 autonomous) are taken
    assert not tiny.add_cell(ctx2, 0, rng)
    assert tiny.ignored_adds == 1


def test_msf_added_cell_is_installed_on_both_ends():
    s = MsfLite()
    ctx = NodeCtx(1, time_source=0, parent=0, tx_peers=frozenset({0}))
    s.sync_monitors(ctx, 0)
    drive_window(s, ctx, [True] * 64)
    (slot, co), = s.negotiated[(1, 0)]
    tx = [c for c in s.cells_at(ctx, slot) if c.is_tx and c.peer == 0 and not c.shared]
    rx = [c for c in s.cells_at(NodeCtx(0), slot) if c.is_rx and c.peer == 1]
    assert tx and rx and tx[0].channel_offset == rx[0].channel_offset == co


@given(st.integers(17, 47))
def test_msf_no_change_strictly_between_thresholds(used):
    mon = UsageMonitor()
    for k in range(64):
        mon.record(k < used)
    assert mon.full
    assert mon.decide(3) == 0
    assert mon.elapsed == 0 and mon.used == 0


@given(st.integers(1, 8), st.lists(st.booleans(), min_size=64, max_size=64))
def test_usage_monitor_decision_rule(n_cells, used):
    mon = UsageMonitor()
    for u in used:
        mon.record(u)
    ratio = sum(used) / 64
    expected = 1 if ratio >= 0.75 else (-1 if ratio <= 0.25 and n_cells > 1 else 0)
    assert mon.decide(n_cells) == expected


def test_msf_forget_clears_node_state():
    s, ctx = _two_cell_state()
    s.forget(1)
    assert (1, 0) not in s.negotiated and not any(k[0] == 1 for k in s.monitors)


# --- priority resolution over the hyperperiod ---------------------------------


def oracle_orchestra_cells(node, parent, time_source, asn, n_co=4, L=17):
    """Independent Orchestra-RB rule table, highest priority first."""
    cells = []
    if asn % 397 == node % 397:
        cells.append(("eb", 0, "TX", "EB", BROADCAST, False))
    if time_source is not None and asn % 397 == time_source % 397:
        cells.append(("eb", 0, "RX", None, time_source, False))
    if asn % 31 == node % 31:
        cells.append(("bc", 1, "TXRX", None, BROADCAST, True))
    if parent is not None and asn % L == parent % L:
        cells.append(("uc", parent % n_co, "TX", None, parent, True))
    if asn % L == node % L:
        cells.append(("uc", node % n_co, "RX", None, ANY, False))
    return cells


def oracle_action(cells, pending_peer, eb_pending, asn, fhs):
    for sf, co, kind, tag, peer, shared in cells:
        if "TX" in kind:
            if tag == "EB" and eb_pending:
                return (TX, channel_for(asn, co, fhs), sf)
            if peer >= 0 and peer == pending_peer:
                return (TX, channel_for(asn, co, fhs), sf)
        if "RX" in kind:
            return (RX, channel_for(asn, co, fhs), sf)
    return None


def test_orchestra_priority_resolution_full_hyperperiod():
    sched = OrchestraRB()
    fhs = Fhs()
    n0 = make_node(0, sched, coordinator=True)
    n1 = make_node(1, sched, parent=0, rank=0)
    n2 = make_node(2, sched, parent=1, rank=1)
    n0.eb_pending = True  # EB always pending, data always queued toward the parent
    n1.eb_pending = False
    n1.enqueue(data_frame(1, 0))
    n2.eb_pending = True
    n2.enqueue(data_frame(2, 1))
    setup = [(n0, None, None, True), (n1, 0, 0, False), (n2, 1, 1, True)]
    sf_name = {"eb": "eb", "bc": "broadcast", "uc": "unicast"}
    for asn in range(sched.hyperperiod()):
        for node, parent, pend, eb in setup:
            got = node.execute_slot(asn, commit=False)
            want = oracle_action(oracle_orchestra_cells(node.id, parent, parent, asn), pend, eb, asn, fhs)
            if want is None:
                assert got is None
            else:
                assert (got[0], got[1], got[3].slotframe) == (want[0], want[1], sf_name[want[2]])
