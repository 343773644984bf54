"""Final source PDD of InfoNCE training when cross-domain negatives are dropped with probability q."""

import argparse

from napgcl.experiments import ablation, benchmark_graph
from napgcl.objective import LossConfig
from napgcl.train import TrainConfig


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--out-dir", default="runs/ablate_cdp")
    p.add_argument("--q-values", type=float, nargs="+", default=[0.0, 0.25, 0.5, 0.75, 1.0])
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    p.add_argument("--epochs", type=int, default=200)
    args = p.parse_args()

    # every epoch is a warm-up epoch in this ablation
    cfg = TrainConfig(epochs=args.epochs, loss=LossConfig(warmup_epochs=args.epochs))
    rows = ablation(cfg, benchmark_graph(), args.q_values, args.seeds,
                    args.out_dir)
    print("q,mean_final_pdd,per_seed")
    for r in rows:
        print(f"{r.q},{r.mean_final_pdd:.4f},{' '.join(f'{x:.4f}' for x in r.final_pdds)}")


if __name__ == "__main__":
    main()
