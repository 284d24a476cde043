"""Scenario construction, single runs, the seed/scheduler/node-count matrix and its outputs."""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .config import AGRI, WAREHOUSE, MatrixConfig, ScenarioConfig
from .metrics import METRICS, NodeResult, RunRecord, aggregate, box_stats, metric_values, run_csv, summary_json
from .mobility import MobilityTrace, Position, gen_agri_trace, gen_warehouse_trace
from .schedulers import ANY, BROADCAST, NodeCtx, Opt, make_scheduler
from .simcore import RngStream
from .simulation import Simulation

MANIFEST_SCHEMA_VERSION = 1
PLOTDATA_FIELDS = ("group", "min", "q1", "median", "q3", "max", "n")


# --- scenarios ----------------------------------------------------------------


def agri_placements(cfg: ScenarioConfig) -> list[tuple[float, str]]:
    """(trail offset, initial direction) per node.

    The coordinator and nodes 1..n-2 start ``near_spacing`` apart from offset 0
    with alternating directions; node n-1 is the remote node.
    """
    out = []
    for i in range(cfg.n_nodes - 1):
        out.append((i * cfg.near_spacing, "forward" if i % 2 == 0 else "backward"))
    out.append((cfg.remote_offset, "forward"))
    return out


def warehouse_placements(cfg: ScenarioConfig) -> list[Position]:
    return [Position(x, y) for x, y in cfg.placements[: cfg.n_nodes]]


def build_traces(cfg: ScenarioConfig, seed: int) -> list[MobilityTrace]:
    if cfg.pattern == AGRI:
        trail = cfg.trail_spec()
        return [
            gen_agri_trace(trail, off, d, speed=cfg.speed, duration=cfg.duration, node=i)
            for i, (off, d) in enumerate(agri_placements(cfg))
        ]
    if cfg.pattern == WAREHOUSE:
        return [
            gen_warehouse_trace(RngStream(seed, ("mob", i)), p, speed=cfg.speed, duration=cfg.duration, node=i)
            for i, p in enumerate(warehouse_placements(cfg))
        ]
    raise ValueError(f"unknown scenario {cfg.pattern!r}")


def make_simulation(cfg: ScenarioConfig, seed: int, verbose: bool = False) -> Simulation:
    return Simulation(
        build_traces(cfg, seed),
        cfg.scheduler,
        seed=seed,
        duration=cfg.duration,
        slot_duration=cfg.slot_duration,
        fhs=cfg.fhs_obj(),
        policy=cfg.sync,
        radio_range=cfg.radio_range,
        link_loss=cfg.link_loss,
        traffic_period=cfg.traffic_period,
        traffic_phase_per_id=cfg.traffic_phase_per_id,
        unicast_len=cfg.unicast_len,
        coordinator=cfg.coordinator,
        verbose=verbose,
    )


@dataclass
class RunOutput:
    record: RunRecord
    events: list[str] = field(default_factory=list)
    wall_time: float = 0.0


def run_single(cfg: ScenarioConfig, seed: int, verbose: bool = False) -> RunOutput:
    t0 = time.perf_counter()
    sim = make_simulation(cfg, seed, verbose).run()
    nodes = [NodeResult.from_trace(tr) for tr in sim.node_traces()]
    rec = RunRecord(cfg.pattern, cfg.scheduler, cfg.n_nodes, seed, nodes, cfg.digest(), sim.stats())
    return RunOutput(rec, sim.event_log_lines() if verbose else [], time.perf_counter() - t0)


# --- matrix -------------------------------------------------------------------


class MatrixRunError(RuntimeError):
    def __init__(self, cfg: ScenarioConfig, seed: int, cause: BaseException):
        super().__init__(f"run {cfg.label()} seed={seed} (config {cfg.digest()[:12]}) failed: {cause!r}")
        self.cfg = cfg
        self.seed = seed
        self.cause = cause


def _worker(item: tuple[dict, int]) -> RunRecord:
    cfg_dict, seed = item
    cfg = ScenarioConfig.from_dict(cfg_dict)
    try:
        return run_single(cfg, seed).record
    except Exception as e:
        raise MatrixRunError(cfg, seed, e) from e


def manifest_json(runs: Sequence[tuple[ScenarioConfig, int]]) -> str:
    configs = {}
    entries = []
    for i, (cfg, seed) in enumerate(runs):
        d = cfg.digest()
        configs.setdefault(d, cfg.to_dict())
        entries.append(
            {"run": i, "scenario": cfg.pattern, "scheduler": cfg.scheduler, "n_nodes": cfg.n_nodes,
             "seed": seed, "config_digest": d}
        )
    doc = {"schema_version": MANIFEST_SCHEMA_VERSION, "configs": configs, "runs": entries}
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def load_manifest(text: str) -> list[tuple[ScenarioConfig, int]]:
    doc = json.loads(text)
    if doc.get("schema_version") != MANIFEST_SCHEMA_VERSION:
        raise ValueError(f"unsupported manifest schema {doc.get('schema_version')!r}")
    configs = {}
    for digest, d in doc["configs"].items():
        cfg = ScenarioConfig.from_dict(d)
        if cfg.digest() != digest:
            raise ValueError(f"manifest config {digest[:12]} does not match its digest")
        configs[digest] = cfg
    return [(configs[e["config_digest"]], int(e["seed"])) for e in sorted(doc["runs"], key=lambda e: e["run"])]


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
        f.write(text)
    os.replace(tmp, path)


def run_file_name(cfg: ScenarioConfig, seed: int) -> str:
    return f"{cfg.pattern}_{cfg.scheduler}_{cfg.n_nodes}_seed{seed}.csv"


@dataclass
class MatrixResult:
    records: list[RunRecord]
    summary: dict
    wall_time: float = 0.0

    def run_csv(self) -> str:
        return run_csv(self.records)


def run_runs(
    runs: Sequence[tuple[ScenarioConfig, int]],
    out_dir: str | Path | None = None,
    workers: int = 1,
    progress: Callable[[int, int, RunRecord], None] | None = None,
) -> MatrixResult:
    """Execute ``runs`` (in any order, results kept in input order) and write outputs."""
    t0 = time.perf_counter()
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        _atomic_write(out / "manifest.json", manifest_json(runs))
    items = [(cfg.to_dict(), seed) for cfg, seed in runs]
    records: list[RunRecord] = []

    def done(rec: RunRecord, cfg: ScenarioConfig, seed: int) -> None:
        records.append(rec)
        if out is not None:
            _atomic_write(out / "runs" / run_file_name(cfg, seed), run_csv([rec]))
        if progress is not None:
            progress(len(records), len(runs), rec)

    if workers <= 1:
        for (cfg, seed), item in zip(runs, items):
            done(_worker(item), cfg, seed)
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            # map keeps input order, which makes the merge deterministic
            for (cfg, seed), rec in zip(runs, pool.map(_worker, items)):
                done(rec, cfg, seed)

    summary = aggregate(records)
    result = MatrixResult(records, summary, time.perf_counter() - t0)
    if out is not None:
        _atomic_write(out / "runs.csv", result.run_csv())
        _atomic_write(out / "summary.json", summary_json(summary))
    return result


def run_matrix(
    matrix: MatrixConfig,
    out_dir: str | Path | None = None,
    workers: int = 1,
    progress: Callable[[int, int, RunRecord], None] | None = None,
) -> MatrixResult:
    return run_runs(matrix.expand(), out_dir, workers, progress)


# --- plot data ----------------------------------------------------------------


def plotdata_rows(summary: dict, scenario: str, metric: str) -> list[list[str]]:
    """Box rows of one scenario and metric, ordered by (n_nodes, scheduler)."""
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}")
    keys = sorted((k for k in summary if k[0] == scenario), key=lambda k: (k[2], k[1]))
    rows = []
    for key in keys:
        stats = summary[key].get(metric)
        if stats is None:
            continue
        rows.append([f"{key[2]}/{key[1]}"] + [f"{v:.6f}" for v in (stats.min, stats.q1, stats.median, stats.q3, stats.max)] + [str(stats.n)])
    return rows


def plotdata_csv(summary: dict, scenario: str, metric: str) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(PLOTDATA_FIELDS)
    w.writerows(plotdata_rows(summary, scenario, metric))
    return buf.getvalue()


def emit_plotdata(summary: dict, out_dir: str | Path, scenarios: Iterable[str] | None = None) -> list[Path]:
    """Write ``<scenario>_<metric>.csv`` for every scenario and metric."""
    out = Path(out_dir)
    scen = sorted(set(scenarios if scenarios is not None else (k[0] for k in summary)))
    paths = []
    for s in scen:
        for metric in METRICS:
            p = out / f"{s}_{metric}.csv"
            _atomic_write(p, plotdata_csv(summary, s, metric))
            paths.append(p)
    return paths


# --- connectivity audit -------------------------------------------------------


def contact_fraction(a: MobilityTrace, b: MobilityTrace, radio_range: float, duration: float, step: float = 1.0) -> float:
    """Share of sampled instants at which two nodes are within radio range."""
    n = int(duration // step)
    hits = sum(1 for k in range(n) if a.position_at(k * step).distance(b.position_at(k * step)) <= radio_range)
    return hits / n if n else 0.0


def remote_node_stats(records: Iterable[RunRecord]) -> dict:
    """Per run: remote node's PRR/downtime and whether its PRR is the group minimum."""
    out = {}
    for rec in records:
        remote = rec.node(rec.n_nodes - 1)
        others = [n.prr for n in rec.nodes if not n.prr_flag and n.node_id != remote.node_id]
        out[(rec.scheduler, rec.seed)] = {
            "prr": remote.prr,
            "downtime": remote.downtime_fraction,
            "is_min": all(remote.prr <= p for p in others),
        }
    return out


def pooled_median(records: Iterable[RunRecord], metric: str) -> float | None:
    stats = box_stats(metric_values(records, metric))
    return None if stats is None else stats.median


# --- schedule dump ------------------------------------------------------------

SCHEDULE_DUMP_FIELDS = ("asn", "node", "slotframe", "slot_offset", "channel_offset", "option", "peer")
TOPOLOGIES = ("line", "star")


def static_contexts(n_nodes: int, topology: str = "line", n_channel_offsets: int = 4) -> list[NodeCtx]:
    """Node contexts of a static converged tree: a chain 0-1-2-... or a star around 0."""
    if topology not in TOPOLOGIES:
        raise ValueError(f"unknown topology {topology!r}; choose from {TOPOLOGIES}")
    parents = {i: (i - 1 if topology == "line" else 0) for i in range(1, n_nodes)}
    ctxs = []
    for i in range(n_nodes):
        p = parents.get(i)
        kids = frozenset(c for c, pc in parents.items() if pc == i)
        peers = frozenset() if p is None else frozenset({p})
        ctxs.append(NodeCtx(i, time_source=p, parent=p, children=kids, tx_peers=peers, n_channel_offsets=n_channel_offsets))
    return ctxs


def _peer_label(peer: int) -> str:
    return {BROADCAST: "broadcast", ANY: "any"}.get(peer, str(peer))


def _option_label(options: int) -> str:
    return "|".join(f.name for f in (Opt.TX, Opt.RX, Opt.SHARED, Opt.EB) if options & f)


def schedule_dump_csv(
    scheduler: str, n_nodes: int, topology: str = "line", start: int = 0, count: int = 100, unicast_len: int = 17
) -> str:
    """Active cells of every node for ``count`` slots from ``start``, highest priority first."""
    kwargs = {} if scheduler == "msf" else {"unicast_len": unicast_len}
    sched = make_scheduler(scheduler, **kwargs)
    ctxs = static_contexts(n_nodes, topology)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SCHEDULE_DUMP_FIELDS)
    for asn in range(start, start + count):
        for ctx in ctxs:
            for c in sched.cells_at(ctx, asn):
                w.writerow([asn, ctx.node, c.slotframe, c.slot_offset, c.channel_offset, _option_label(c.options), _peer_label(c.peer)])
    return buf.getvalue()
