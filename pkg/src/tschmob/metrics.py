"""Per-node PRR, downtime and initial join time; box statistics across runs."""

from __future__ import annotations

import csv
import io
import json
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .netstack import AppPacketId, DropReason

SUMMARY_SCHEMA_VERSION = 1
METRICS = ("prr", "downtime_fraction", "join_time_s")
RUN_CSV_FIELDS = (
    "scenario",
    "scheduler",
    "n_nodes",
    "seed",
    "node_id",
    "generated",
    "delivered",
    "tx_attempts",
    "prr",
    "downtime_fraction",
    "join_time_s",
    "censored",
)


class PacketLedger:
    """Tracks every application packet from generation to delivery or drop."""

    def __init__(self):
        self.generated_by: Counter = Counter()
        self.delivered_ids: set[AppPacketId] = set()
        self.duplicates = 0
        self.tx_attempts_by: Counter = Counter()
        self.drops: dict[int, Counter] = defaultdict(Counter)

    def generated(self, pid: AppPacketId) -> None:
        self.generated_by[pid.origin] += 1

    def delivered(self, pid: AppPacketId) -> None:
        if pid in self.delivered_ids:
            self.duplicates += 1
        else:
            self.delivered_ids.add(pid)

    def dropped(self, pid: AppPacketId, reason: DropReason) -> None:
        self.drops[pid.origin][reason] += 1

    def tx_attempt(self, pid: AppPacketId) -> None:
        self.tx_attempts_by[pid.origin] += 1

    def delivered_by(self, origin: int) -> int:
        return sum(1 for p in self.delivered_ids if p.origin == origin)


@dataclass
class NodeTrace:
    """Everything the metrics need about one node after a run."""

    node: int
    total_slots: int
    slot_duration: float = 0.010
    boot_asn: int = 0
    phase_log: list = field(default_factory=list)
    generated: int = 0
    delivered_unique: int = 0
    tx_attempts: int = 0
    drops: dict = field(default_factory=dict)
    in_flight: int = 0
    coordinator: bool = False


def _joined_slots(trace: NodeTrace) -> int:
    joined = 0
    start = None
    for asn, phase in trace.phase_log:
        asn = min(asn, trace.total_slots)
        is_joined = str(getattr(phase, "value", phase)) == "JOINED"
        if is_joined and start is None:
            start = asn
        elif not is_joined and start is not None:
            joined += asn - start
            start = None
    if start is not None:
        joined += trace.total_slots - start
    return joined


def prr(trace: NodeTrace) -> float:
    """Unique packets delivered at the sink over packets generated (0 when none)."""
    if trace.generated == 0:
        return 0.0
    return trace.delivered_unique / trace.generated


def prr_flagged(trace: NodeTrace) -> bool:
    return trace.generated == 0


def downtime_fraction(trace: NodeTrace) -> float:
    return 1.0 - _joined_slots(trace) / trace.total_slots


def initial_join_time(trace: NodeTrace) -> float | None:
    """Seconds from boot to the first JOINED slot; None if never joined."""
    for asn, phase in trace.phase_log:
        if str(getattr(phase, "value", phase)) == "JOINED" and asn < trace.total_slots:
            return (asn - trace.boot_asn) * trace.slot_duration
    return None


def conservation_residual(trace: NodeTrace) -> int:
    """generated - delivered - drops - in_flight; zero when every packet is accounted for."""
    return trace.generated - trace.delivered_unique - sum(trace.drops.values()) - trace.in_flight


@dataclass
class NodeResult:
    node_id: int
    generated: int
    delivered: int
    tx_attempts: int
    prr: float
    prr_flag: bool
    downtime_fraction: float
    join_time_s: float | None
    drops: dict = field(default_factory=dict)
    in_flight: int = 0
    coordinator: bool = False

    @property
    def censored(self) -> bool:
        return self.join_time_s is None

    @classmethod
    def from_trace(cls, trace: NodeTrace) -> "NodeResult":
        return cls(
            node_id=trace.node,
            generated=trace.generated,
            delivered=trace.delivered_unique,
            tx_attempts=trace.tx_attempts,
            prr=prr(trace),
            prr_flag=prr_flagged(trace),
            downtime_fraction=downtime_fraction(trace),
            join_time_s=initial_join_time(trace),
            drops={str(getattr(k, "value", k)): v for k, v in trace.drops.items()},
            in_flight=trace.in_flight,
            coordinator=trace.coordinator,
        )


@dataclass
class RunRecord:
    scenario: str
    scheduler: str
    n_nodes: int
    seed: int
    nodes: list[NodeResult]
    config_digest: str = ""
    stats: dict = field(default_factory=dict)

    @property
    def key(self) -> tuple[str, str, int]:
        return (self.scenario, self.scheduler, self.n_nodes)

    def node(self, node_id: int) -> NodeResult:
        for n in self.nodes:
            if n.node_id == node_id:
                return n
        raise KeyError(node_id)

    def conservation_ok(self) -> bool:
        return all(
            n.generated - n.delivered - sum(n.drops.values()) - n.in_flight == 0 for n in self.nodes
        )


@dataclass(frozen=True)
class BoxStats:
    min: float
    q1: float
    median: float
    q3: float
    max: float
    n: int

    def as_dict(self) -> dict:
        return {"min": self.min, "q1": self.q1, "median": self.median, "q3": self.q3, "max": self.max, "n": self.n}


def quantile(sorted_values: Sequence[float], q: float) -> float:
    """Linear-interpolation quantile (Hyndman-Fan type 7)."""
    n = len(sorted_values)
    h = (n - 1) * q
    lo = math.floor(h)
    hi = min(lo + 1, n - 1)
    return sorted_values[lo] + (h - lo) * (sorted_values[hi] - sorted_values[lo])


def box_stats(values: Iterable[float]) -> BoxStats | None:
    v = sorted(values)
    if not v:
        return None
    return BoxStats(v[0], quantile(v, 0.25), quantile(v, 0.5), quantile(v, 0.75), v[-1], len(v))


def metric_values(records: Iterable[RunRecord], metric: str) -> list[float]:
    """Pooled node values of one metric; flagged PRRs and censored join times are left out."""
    out = []
    for rec in records:
        for n in rec.nodes:
            if metric == "prr":
                if not n.prr_flag:
                    out.append(n.prr)
            elif metric == "downtime_fraction":
                out.append(n.downtime_fraction)
            elif metric == "join_time_s":
                if n.join_time_s is not None:
                    out.append(n.join_time_s)
            else:
                raise ValueError(f"unknown metric {metric!r}")
    return out


def aggregate(records: Iterable[RunRecord]) -> dict[tuple[str, str, int], dict]:
    """Group by (scenario, scheduler, n_nodes) and pool node values across seeds."""
    groups: dict[tuple, list[RunRecord]] = defaultdict(list)
    for rec in records:
        groups[rec.key].append(rec)
    out = {}
    for key in sorted(groups):
        recs = groups[key]
        entry = {}
        for metric in METRICS:
            stats = box_stats(metric_values(recs, metric))
            if stats is not None:
                entry[metric] = stats
        entry["censored_joins"] = sum(1 for r in recs for n in r.nodes if n.censored)
        entry["runs"] = len(recs)
        out[key] = entry
    return out


def group_label(key: tuple[str, str, int]) -> str:
    scenario, scheduler, n_nodes = key
    return f"{scenario}/{scheduler}/{n_nodes}"


def summary_json(summary: dict) -> str:
    groups = {}
    for key, entry in summary.items():
        groups[group_label(key)] = {
            k: (v.as_dict() if isinstance(v, BoxStats) else v) for k, v in entry.items()
        }
    return json.dumps({"schema_version": SUMMARY_SCHEMA_VERSION, "groups": groups}, indent=2, sort_keys=True) + "\n"


def load_summary_json(text: str) -> dict:
    data = json.loads(text)
    if data.get("schema_version") != SUMMARY_SCHEMA_VERSION:
        raise ValueError(f"unsupported summary schema {data.get('schema_version')!r}")
    out = {}
    for label, entry in data["groups"].items():
        scenario, scheduler, n = label.split("/")
        out[(scenario, scheduler, int(n))] = {
            k: (BoxStats(**v) if isinstance(v, dict) else v) for k, v in entry.items()
        }
    return out


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def run_csv_rows(record: RunRecord) -> list[list[str]]:
    rows = []
    for n in record.nodes:
        rows.append(
            [
                record.scenario,
                record.scheduler,
                str(record.n_nodes),
                str(record.seed),
                str(n.node_id),
                str(n.generated),
                str(n.delivered),
                str(n.tx_attempts),
                _fmt(n.prr),
                _fmt(n.downtime_fraction),
                "" if n.join_time_s is None else _fmt(n.join_time_s),
                "1" if n.censored else "0",
            ]
        )
    return rows


def run_csv(records: Iterable[RunRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RUN_CSV_FIELDS)
    for rec in records:
        w.writerows(run_csv_rows(rec))
    return buf.getvalue()


def read_run_csv(text: str) -> list[dict]:
    return list(csv.DictReader(io.StringIO(text)))
