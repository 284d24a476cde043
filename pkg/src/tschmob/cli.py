"""Command-line entry point: ``python -m tschmob <command> ...``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import SCENARIOS, ConfigError, MatrixConfig, load_config
from .experiment import (
    TOPOLOGIES,
    build_traces,
    emit_plotdata,
    load_manifest,
    run_runs,
    run_single,
    schedule_dump_csv,
)
from .metrics import load_summary_json, run_csv
from .mobility import write_movement_file
from .schedulers import SCHEDULERS


def _matrix(args) -> MatrixConfig:
    return load_config(args.config) if args.config else MatrixConfig()


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def cmd_run(args) -> int:
    m = _matrix(args)
    cfg = m.base[args.scenario].with_(scheduler=args.scheduler, n_nodes=args.nodes)
    res = run_single(cfg, args.seed, verbose=args.verbose_trace)
    rec = res.record
    print(f"{cfg.label()} seed={args.seed} digest={cfg.digest()[:12]} wall={res.wall_time:.1f}s")
    print(f"{'node':>4} {'gen':>5} {'deliv':>5} {'prr':>6} {'down':>6} {'join_s':>8}")
    for n in rec.nodes:
        join = "-" if n.join_time_s is None else f"{n.join_time_s:.2f}"
        print(f"{n.node_id:>4} {n.generated:>5} {n.delivered:>5} {n.prr:>6.3f} {n.downtime_fraction:>6.3f} {join:>8}")
    if args.out_dir:
        out = Path(args.out_dir)
        _write(out / "run.csv", run_csv([rec]))
        if args.verbose_trace:
            _write(out / "events.log", "asn,node,event,detail\n" + "".join(line + "\n" for line in res.events))
        print(f"wrote {out}")
    return 0


def cmd_matrix(args) -> int:
    if args.manifest:
        runs = load_manifest(Path(args.manifest).read_text(encoding="utf-8"))
    else:
        m = _matrix(args)
        runs = [
            (cfg, seed)
            for cfg, seed in m.expand()
            if (args.scheduler is None or cfg.scheduler == args.scheduler)
            and (args.nodes is None or cfg.n_nodes == args.nodes)
            and (args.scenario is None or cfg.pattern == args.scenario)
            and (args.seed is None or seed == args.seed)
        ]
    if not runs:
        print("no runs selected", file=sys.stderr)
        return 2

    def progress(i, n, rec):
        if not args.quiet:
            print(f"[{i}/{n}] {rec.scenario}/{rec.scheduler}/{rec.n_nodes} seed={rec.seed}", flush=True)

    res = run_runs(runs, args.out_dir, workers=args.workers, progress=progress)
    emit_plotdata(res.summary, Path(args.out_dir) / "plotdata")
    print(f"{len(res.records)} runs in {res.wall_time:.0f}s -> {args.out_dir}")
    return 0


def cmd_schedule_dump(args) -> int:
    text = schedule_dump_csv(args.scheduler, args.nodes, args.topology, args.start, args.count)
    if args.out_dir:
        p = Path(args.out_dir) / f"schedule_{args.scheduler}_{args.nodes}_{args.topology}.csv"
        _write(p, text)
        print(f"wrote {p}")
    else:
        sys.stdout.write(text)
    return 0


def cmd_gen_mobility(args) -> int:
    m = _matrix(args)
    cfg = m.base[args.scenario].with_(n_nodes=args.nodes)
    text = write_movement_file(build_traces(cfg, args.seed))
    if args.out_dir:
        p = Path(args.out_dir) / f"{args.scenario}_{args.nodes}_seed{args.seed}.movements"
        _write(p, text)
        print(f"wrote {p}")
    else:
        sys.stdout.write(text)
    return 0


def cmd_plotdata(args) -> int:
    summary = load_summary_json(Path(args.summary).read_text(encoding="utf-8"))
    for p in emit_plotdata(summary, args.out_dir):
        print(p)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tschmob", description="Mobile TSCH scheduling simulator")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, seed_default=1, nodes_default=3, scheduler_default="orchestra"):
        p.add_argument("--config", help="config file (key = value grammar)")
        p.add_argument("--seed", type=int, default=seed_default)
        p.add_argument("--scheduler", choices=sorted(SCHEDULERS), default=scheduler_default)
        p.add_argument("--nodes", type=int, default=nodes_default)
        p.add_argument("--out-dir")

    p = sub.add_parser("run", help="one simulation run")
    common(p)
    p.add_argument("--scenario", choices=SCENARIOS, default="agri")
    p.add_argument("--verbose-trace", action="store_true", help="keep and write the per-slot event log")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("matrix", help="the scenario x scheduler x nodes x seed sweep")
    common(p, seed_default=None, nodes_default=None, scheduler_default=None)
    p.add_argument("--scenario", choices=SCENARIOS)
    p.add_argument("--manifest", help="rerun exactly the runs of an earlier manifest.json")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_matrix)

    p = sub.add_parser("schedule-dump", help="CSV of active cells for a static topology")
    common(p)
    p.add_argument("--topology", choices=TOPOLOGIES, default="line")
    p.add_argument("--start", type=int, default=0)
    p.add_argument("--count", type=int, default=397)
    p.set_defaults(func=cmd_schedule_dump)

    p = sub.add_parser("gen-mobility", help="write a movement file")
    common(p)
    p.add_argument("--scenario", choices=SCENARIOS, default="agri")
    p.set_defaults(func=cmd_gen_mobility)

    p = sub.add_parser("plotdata", help="box-plot CSVs from a summary.json")
    p.add_argument("--summary", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_plotdata)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "matrix" and not args.out_dir:
        build_parser().error("matrix needs --out-dir")
    try:
        return args.func(args)
    except (ConfigError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
