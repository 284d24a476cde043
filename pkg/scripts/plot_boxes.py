"""Box plots from the plotdata CSVs written by ``tschmob matrix``.

    python scripts/plot_boxes.py out/full/plotdata --out out/full/figures
"""

import argparse
import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

LABELS = {"prr": "PRR", "downtime_fraction": "downtime fraction", "join_time_s": "initial join time (s)"}


def plot_file(path: Path, out_dir: Path) -> Path:
    with path.open(encoding="utf-8") as f:
        rows = list(csv.DictReader(f))
    stats = [
        {"label": r["group"], "whislo": float(r["min"]), "q1": float(r["q1"]), "med": float(r["median"]),
         "q3": float(r["q3"]), "whishi": float(r["max"]), "fliers": []}
        for r in rows
    ]
    scenario, metric = path.stem.split("_", 1)
    fig, ax = plt.subplots(figsize=(8, 3.5))
    ax.bxp(stats, showfliers=False)
    ax.set_ylabel(LABELS.get(metric, metric))
    ax.set_title(f"{scenario}: {LABELS.get(metric, metric)} by nodes/scheduler")
    ax.tick_params(axis="x", rotation=45)
    fig.tight_layout()
    out = out_dir / f"{path.stem}.png"
    fig.savefig(out, dpi=120)
    plt.close(fig)
    return out


def main(argv=None):
    ap = argparse.ArgumentParser(description="render plotdata CSVs as box plots")
    ap.add_argument("plotdata_dir", type=Path)
    ap.add_argument("--out", type=Path, default=None)
    args = ap.parse_args(argv)
    out = args.out or args.plotdata_dir
    out.mkdir(parents=True, exist_ok=True)
    for p in sorted(args.plotdata_dir.glob("*.csv")):
        print(plot_file(p, out))


if __name__ == "__main__":
    main()
