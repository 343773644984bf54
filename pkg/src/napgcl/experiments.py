"""Benchmark runs shared by the acceptance suite and the scripts in ``scripts/``.

Every helper trains on the default synthetic benchmark (one generated graph,
fixed domain split) and varies only the training seed.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import SyntheticConfig, generate
from .graph import Graph
from .metrics import CdpSimilarityReport, cdp_similarity_report
from .train import AblationRow, Evaluator, TrainConfig, TrainResult, run_ablation_cdp_removal, train


def benchmark_graph(cfg: SyntheticConfig = SyntheticConfig()) -> Graph:
    return generate(cfg)


def with_ratio(cfg: TrainConfig, nap_ratio: float, seed: int) -> TrainConfig:
    return replace(cfg, seed=seed, loss=replace(cfg.loss, nap_ratio=nap_ratio))


def record_at(res: TrainResult, epoch: int):
    for rec in res.records:
        if rec.epoch == epoch:
            return rec
    raise KeyError(f"epoch {epoch} was not evaluated")


@dataclass(frozen=True)
class RunSummary:
    seed: int
    nap_ratio: float
    pdd_end_of_warmup: float  # after the last warm-up epoch
    final_pdd: float
    best_epoch: int
    best_val_acc: float
    best_target_acc: float
    final_target_acc: float

    @classmethod
    def of(cls, res: TrainResult) -> RunSummary:
        cfg = res.config
        n = cfg.loss.warmup_epochs
        best = record_at(res, res.best.epoch)
        last = res.records[-1]
        return cls(cfg.seed, cfg.loss.nap_ratio, record_at(res, n - 1).pdd if n else float("nan"),
                   last.pdd, res.best.epoch, best.val_acc, best.target_acc, last.target_acc)


def run_pair(cfg: TrainConfig, graph: Graph, seed: int, nap_ratio: float = 0.01,
             out_dir: str | Path | None = None) -> tuple[TrainResult, TrainResult]:
    """InfoNCE-only (ratio 0) and promoted-positive runs with the same seed."""
    runs = []
    for ratio in (0.0, nap_ratio):
        d = None if out_dir is None else Path(out_dir) / f"rho={ratio!r}" / f"seed={seed}"
        runs.append(train(with_ratio(cfg, ratio, seed), graph, d))
    return runs[0], runs[1]


def final_cdp_similarity(res: TrainResult, graph: Graph) -> CdpSimilarityReport:
    """Cosine similarity of the last epoch's promoted pairs, measured on clean source embeddings."""
    h = Evaluator(graph, res.split, res.config.probe).embed(res.last.params)[res.source_nodes]
    return cdp_similarity_report(h, res.source_graph.domains, res.final_mask, "embedding")


def ablation(cfg: TrainConfig, graph: Graph, q_values: Sequence[float] = (0.0, 0.5, 1.0),
             seeds: Sequence[int] = (0, 1, 2), out_dir: str | Path | None = None) -> list[AblationRow]:
    return run_ablation_cdp_removal(cfg, graph, q_values, seeds, out_dir)


def mean(values) -> float:
    return float(np.mean(list(values)))
