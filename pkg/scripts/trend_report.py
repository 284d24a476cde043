"""Summarize a finished matrix directory against the expected qualitative trends.

    python -m tschmob matrix --out-dir out/full
    python scripts/trend_report.py out/full
"""

import argparse
from collections import defaultdict
from pathlib import Path

from tschmob.experiment import pooled_median
from tschmob.metrics import NodeResult, RunRecord, read_run_csv

SCHEDS = ("orchestra", "alice", "msf")


def load_records(run_dir: Path) -> list[RunRecord]:
    rows = read_run_csv((run_dir / "runs.csv").read_text(encoding="utf-8"))
    grouped = defaultdict(list)
    for r in rows:
        key = (r["scenario"], r["scheduler"], int(r["n_nodes"]), int(r["seed"]))
        join = float(r["join_time_s"]) if r["join_time_s"] else None
        gen = int(r["generated"])
        grouped[key].append(
            NodeResult(int(r["node_id"]), gen, int(r["delivered"]), int(r["tx_attempts"]), float(r["prr"]),
                       gen == 0, float(r["downtime_fraction"]), join)
        )
    return [RunRecord(s, sch, n, seed, nodes) for (s, sch, n, seed), nodes in grouped.items()]


def main(argv=None):
    ap = argparse.ArgumentParser(description="trend summary of a matrix output directory")
    ap.add_argument("run_dir", type=Path)
    args = ap.parse_args(argv)
    recs = load_records(args.run_dir)

    def med(metric, **sel):
        return pooled_median([r for r in recs if all(getattr(r, k) == v for k, v in sel.items())], metric)

    print(f"{'scenario':<10} {'sched':<10} {'n':>2} {'prr':>7} {'down':>7} {'join_s':>8}")
    for scen in ("agri", "warehouse"):
        for s in SCHEDS:
            for n in (3, 4, 5):
                sel = dict(scenario=scen, scheduler=s, n_nodes=n)
                if not any(r.key == (scen, s, n) for r in recs):
                    continue
                j = med("join_time_s", **sel)
                print(f"{scen:<10} {s:<10} {n:>2} {med('prr', **sel):>7.3f} {med('downtime_fraction', **sel):>7.3f} "
                      f"{'-' if j is None else f'{j:.2f}':>8}")

    print()
    for s in SCHEDS:
        wh = med("downtime_fraction", scenario="warehouse", scheduler=s)
        p3, p4 = med("prr", scenario="agri", scheduler=s, n_nodes=3), med("prr", scenario="agri", scheduler=s, n_nodes=4)
        print(f"{s:<10} warehouse downtime {wh:.3f} (target < 0.05); agri PRR 3->4 nodes {p3:.3f} -> {p4:.3f}")
    j3 = med("join_time_s", scenario="warehouse", n_nodes=3)
    j4 = med("join_time_s", scenario="warehouse", n_nodes=4)
    print(f"warehouse join time 3->4 nodes {j3:.2f}s -> {j4:.2f}s")


if __name__ == "__main__":
    main()
