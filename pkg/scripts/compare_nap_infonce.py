"""Target-domain accuracy and final PDD of promoted-positive training against plain InfoNCE.

Both runs of a seed share the graph, the split and the initialization. The
target accuracy is read at the checkpoint with the best validation accuracy.
"""

import argparse
import csv
from dataclasses import asdict
from pathlib import Path

from napgcl.experiments import RunSummary, benchmark_graph, mean, run_pair
from napgcl.train import TrainConfig


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out-dir", default="runs/compare")
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    p.add_argument("--nap-ratio", type=float, default=0.01)
    args = p.parse_args()

    out = Path(args.out_dir)
    graph = benchmark_graph()
    rows = []
    for s in args.seeds:
        rows += [RunSummary.of(r) for r in run_pair(TrainConfig(), graph, s, args.nap_ratio, out)]

    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(asdict(rows[0])), lineterminator="\n")
        w.writeheader()
        w.writerows(asdict(r) for r in rows)
    for ratio in (0.0, args.nap_ratio):
        sel = [r for r in rows if r.nap_ratio == ratio]
        print(f"rho {ratio:<5} target acc {mean(r.best_target_acc for r in sel):.4f} "
              f"(final epoch {mean(r.final_target_acc for r in sel):.4f})  "
              f"final PDD {mean(r.final_pdd for r in sel):.4f}")


if __name__ == "__main__":
    main()
