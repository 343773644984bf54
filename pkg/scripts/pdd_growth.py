"""Source PDD per epoch for InfoNCE-only and promoted-positive training on the synthetic benchmark.

Writes one metrics.csv per (ratio, seed) plus pdd_curves.csv with the PDD of
every run side by side, one row per epoch.
"""

import argparse
import csv
from pathlib import Path

from napgcl.experiments import RunSummary, benchmark_graph, run_pair
from napgcl.train import TrainConfig


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out-dir", default="runs/pdd_growth")
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    p.add_argument("--nap-ratio", type=float, default=0.01)
    args = p.parse_args()

    out = Path(args.out_dir)
    graph = benchmark_graph()
    curves = {}
    for s in args.seeds:
        base, nap = run_pair(TrainConfig(), graph, s, args.nap_ratio, out)
        for res in (base, nap):
            r = RunSummary.of(res)
            curves[f"rho={r.nap_ratio}/seed={s}"] = {rec.epoch: rec.pdd for rec in res.records}
            print(f"rho {r.nap_ratio:<5} seed {s}: PDD {r.pdd_end_of_warmup:.4f} at end of warm-up, "
                  f"{r.final_pdd:.4f} at the end")

    names = sorted(curves)
    epochs = sorted(set().union(*curves.values()))
    with open(out / "pdd_curves.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch"] + names)
        for e in epochs:
            w.writerow([e] + [repr(curves[n][e]) if e in curves[n] else "" for n in names])
    print(f"wrote {out / 'pdd_curves.csv'}")


if __name__ == "__main__":
    main()
