"""Geometric reachability of the coordinator, independent of any MAC behavior.

For every node and sampled instant, checks whether a multi-hop path of
in-range links connects the node to the coordinator. The fraction of instants
without such a path is a lower bound on the node's downtime, since no TSCH
schedule can keep a node synchronized when no radio path exists.

    python scripts/connectivity_audit.py --scenario warehouse --nodes 3 4 5 --seeds 1-20
"""

import argparse
import statistics

import networkx as nx

from tschmob.config import SCENARIOS, ScenarioConfig, parse_seeds
from tschmob.experiment import build_traces


def unreachable_fractions(cfg: ScenarioConfig, seed: int, step: float) -> list[float]:
    traces = build_traces(cfg, seed)
    n_samples = int(cfg.duration // step)
    cut = [0] * len(traces)
    for k in range(n_samples):
        t = k * step
        pos = [tr.position_at(t) for tr in traces]
        g = nx.Graph()
        g.add_nodes_from(range(len(traces)))
        g.add_edges_from(
            (i, j)
            for i in range(len(pos))
            for j in range(i + 1, len(pos))
            if pos[i].distance(pos[j]) <= cfg.radio_range
        )
        reach = nx.node_connected_component(g, cfg.coordinator)
        for i in range(len(traces)):
            cut[i] += i not in reach
    return [c / n_samples for c in cut]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scenario", choices=SCENARIOS, default="warehouse")
    ap.add_argument("--nodes", type=int, nargs="+", default=[3, 4, 5])
    ap.add_argument("--seeds", default="1-20")
    ap.add_argument("--step", type=float, default=5.0, help="sampling step, s")
    args = ap.parse_args(argv)

    seeds = parse_seeds(args.seeds)
    print("nodes  median_unreachable  mean_unreachable  max_unreachable  (non-coordinator nodes, pooled over seeds)")
    for n in args.nodes:
        cfg = ScenarioConfig(pattern=args.scenario, n_nodes=n)
        pooled = []
        for seed in seeds:
            pooled.extend(unreachable_fractions(cfg, seed, args.step)[1:])
        print(f"{n:>5}  {statistics.median(pooled):>18.3f}  {statistics.fmean(pooled):>16.3f}  {max(pooled):>15.3f}")


if __name__ == "__main__":
    main()
