"""Two-stage training (InfoNCE warm-up, then NaP), OOD checkpoint selection, CDP-removal ablation."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import MISSING, asdict, dataclass, field, fields, is_dataclass, replace
from pathlib import Path
from typing import Collection, Sequence

import numpy as np

from . import autodiff as ad
from .augment import AugmentConfig, make_views
from .data import DomainSplit, make_split
from .graph import Graph, induced_subgraph, normalized_adjacency
from .metrics import ProbeConfig, linear_probe, pdd
from .nn import (AdamConfig, Checkpoint, EncoderConfig, EncoderParams, OptimizerState,
                 gcn_forward, gcn_propagate, optimizer_step, project)
from .objective import (LossConfig, SimilarityMask, cdp_removal_loss, contrastive_loss,
                        nap_mask, promoted_count, count_cross_domain)

log = logging.getLogger(__name__)

MASK_REFRESH = ("every-epoch", "once")
METRICS_HEADER = ["epoch", "stage", "loss", "pdd", "val_acc", "target_acc", "mask_size"]


class NonFiniteLoss(FloatingPointError):
    def __init__(self, epoch: int, detail: str):
        self.epoch = epoch
        super().__init__(f"non-finite value at epoch {epoch}: {detail}")


@dataclass(frozen=True)
class SplitConfig:
    n_source: int = 4
    n_val: int = 1
    n_target: int = 1
    seed: int = 0


@dataclass(frozen=True)
class TrainConfig:
    loss: LossConfig = field(default_factory=LossConfig)
    view_alpha: AugmentConfig = field(default_factory=lambda: AugmentConfig(0.2, 0.3))
    view_beta: AugmentConfig = field(default_factory=lambda: AugmentConfig(0.3, 0.2))
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    optim: AdamConfig = field(default_factory=AdamConfig)
    probe: ProbeConfig = field(default_factory=ProbeConfig)
    split: SplitConfig = field(default_factory=SplitConfig)
    epochs: int = 200
    seed: int = 0
    eval_every: int = 1
    mask_refresh: str = "every-epoch"
    max_nodes: int = 5000

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.loss.warmup_epochs > self.epochs:
            raise ValueError(f"warmup_epochs ({self.loss.warmup_epochs}) exceeds epochs ({self.epochs})")
        if self.eval_every < 1:
            raise ValueError("eval_every must be >= 1")
        if self.mask_refresh not in MASK_REFRESH:
            raise ValueError(f"mask_refresh must be one of {MASK_REFRESH}")

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, doc: dict) -> TrainConfig:
        return _from_dict(cls, doc)


def _from_dict(cls, doc: dict):
    kwargs = {}
    for f in fields(cls):
        if f.name not in doc:
            continue
        sub = f.default_factory() if f.default_factory is not MISSING else None
        if is_dataclass(sub) and isinstance(doc[f.name], dict):
            kwargs[f.name] = _from_dict(type(sub), doc[f.name])
        else:
            kwargs[f.name] = doc[f.name]
    return cls(**kwargs)


@dataclass(frozen=True)
class MetricsRecord:
    epoch: int
    stage: str
    loss: float
    pdd: float
    val_acc: float
    target_acc: float | None
    mask_size: int

    def csv_row(self) -> list[str]:
        return [str(self.epoch), self.stage, repr(self.loss), repr(self.pdd), repr(self.val_acc),
                "" if self.target_acc is None else repr(self.target_acc), str(self.mask_size)]


def read_metrics(path: str | Path) -> list[MetricsRecord]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        return [MetricsRecord(int(r["epoch"]), r["stage"], float(r["loss"]), float(r["pdd"]),
                              float(r["val_acc"]),
                              None if r["target_acc"] == "" else float(r["target_acc"]),
                              int(r["mask_size"])) for r in reader]


@dataclass(eq=False)
class TrainResult:
    config: TrainConfig
    split: DomainSplit
    records: list[MetricsRecord]
    best: Checkpoint
    last: Checkpoint
    final_mask: SimilarityMask
    source_graph: Graph
    source_nodes: np.ndarray  # index into the full graph of each source-graph node
    snapshots: dict[int, Checkpoint] = field(default_factory=dict)


class Evaluator:
    """Embeds the un-augmented full graph and scores source PDD and OOD probe accuracy."""

    def __init__(self, graph: Graph, split: DomainSplit, probe: ProbeConfig):
        self.graph = graph
        self.adj = normalized_adjacency(graph)
        self.probe = probe
        d = graph.domains
        self.src = np.flatnonzero(np.isin(d, split.source))
        self.val = np.flatnonzero(np.isin(d, split.val))
        self.tgt = np.flatnonzero(np.isin(d, split.target))

    def embed(self, params: EncoderParams) -> np.ndarray:
        return gcn_propagate(self.adj, self.graph.features, params).value

    def accuracy(self, h: np.ndarray, rows: np.ndarray) -> float | None:
        if len(rows) == 0:
            return None
        y = self.graph.labels
        return linear_probe(h[self.src], y[self.src], h[rows], y[rows], self.probe)

    def __call__(self, params: EncoderParams) -> tuple[float, float, float | None]:
        h = self.embed(params)
        return (pdd(h[self.src], self.graph.domains[self.src]).value,
                self.accuracy(h, self.val), self.accuracy(h, self.tgt))


def epoch_seed(seed: int, stream: int, epoch: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([seed, stream, epoch])


def _eval_epochs(cfg: TrainConfig) -> set[int]:
    e = {k for k in range(cfg.epochs) if (k + 1) % cfg.eval_every == 0}
    e.add(cfg.epochs - 1)
    if cfg.loss.warmup_epochs >= 1:
        e.add(cfg.loss.warmup_epochs - 1)
    return e


def train(cfg: TrainConfig, graph: Graph, out_dir: str | Path | None = None, *,
          split: DomainSplit | None = None, resume: Checkpoint | None = None,
          mask_dump: str | Path | None = None,
          snapshot_epochs: Collection[int] = ()) -> TrainResult:
    """Run the two-stage protocol and return the best-validation checkpoint and the metrics log.

    Epochs ``0..n-1`` minimize InfoNCE (optionally with CDP removal); epochs
    ``n..E-1`` re-select the top cross-domain pairs of the current views and
    minimize the promoted-positive loss. Metrics describe the model after the
    epoch's update. When ``out_dir`` is given, ``metrics.csv`` (flushed per
    row), ``config.json``, ``best.npz`` and ``last.npz`` are written there.
    """
    if split is None:
        s = cfg.split
        split = make_split(graph.num_domains, s.n_source, s.n_val, s.n_target, s.seed)
    src, src_nodes = induced_subgraph(graph, split.source)
    if src.num_nodes > cfg.max_nodes:
        raise ValueError(f"source graph has {src.num_nodes} nodes, above max_nodes={cfg.max_nodes}")
    config_json = cfg.to_json()
    evaluator = Evaluator(graph, split, cfg.probe)
    n_warm = cfg.loss.warmup_epochs
    r = promoted_count(cfg.loss.nap_ratio, count_cross_domain(src.domains))

    if resume is not None:
        params = resume.params.copy()
        opt = resume.optimizer.copy()
        start = resume.epoch + 1
        mask = SimilarityMask(resume.mask, resume.epoch, len(resume.mask)) if len(resume.mask) else None
    else:
        params = EncoderParams.init(graph.num_features, cfg.encoder, epoch_seed(cfg.seed, 0, 0))
        opt = OptimizerState.init(params, cfg.optim)
        start = 0
        mask = None

    out = Path(out_dir) if out_dir is not None else None
    writer = fh = dump = None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.json").write_text(json.dumps(asdict(cfg), indent=2, sort_keys=True) + "\n")
        fh = open(out / "metrics.csv", "w", newline="")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(METRICS_HEADER)
        fh.flush()
    if mask_dump is not None:
        dump = open(mask_dump, "w")
        dump.write("epoch,i,j,similarity\n")

    eval_at = _eval_epochs(cfg)
    records: list[MetricsRecord] = []
    best: Checkpoint | None = None
    snapshots: dict[int, Checkpoint] = {}
    final_mask = SimilarityMask.empty()
    try:
        for epoch in range(start, cfg.epochs):
            nap_stage = epoch >= n_warm
            try:
                view_a, view_b = make_views(src, cfg.view_alpha, cfg.view_beta,
                                            epoch_seed(cfg.seed, 1, epoch))
                z_a = project(gcn_forward(view_a, params), params)
                z_b = project(gcn_forward(view_b, params), params)
                if nap_stage and r > 0:
                    if mask is None or cfg.mask_refresh == "every-epoch":
                        mask, b = nap_mask(z_a, z_b, src.domains, cfg.loss.nap_ratio, epoch)
                        if dump is not None:
                            for i, j in mask.pairs.tolist():
                                dump.write(f"{epoch},{i},{j},{float(b[i, j])!r}\n")
                    loss = contrastive_loss(z_a, z_b, mask, cfg.loss, src.domains)
                    final_mask = mask
                elif not nap_stage and cfg.loss.cdp_removal_ratio > 0:
                    loss = cdp_removal_loss(z_a, z_b, cfg.loss.cdp_removal_ratio,
                                            epoch_seed(cfg.seed, 2, epoch), cfg.loss, src.domains)
                    final_mask = SimilarityMask.empty(epoch)
                else:
                    loss = contrastive_loss(z_a, z_b, None, cfg.loss)
                    final_mask = SimilarityMask.empty(epoch)
                loss_value = loss.item()
                if not np.isfinite(loss_value):
                    raise NonFiniteLoss(epoch, f"loss = {loss_value}")
                ad.backward(loss)
                optimizer_step(params, opt)
            except (ad.NonFiniteValue, FloatingPointError) as exc:
                if isinstance(exc, NonFiniteLoss):
                    raise
                raise NonFiniteLoss(epoch, str(exc)) from exc

            mask_size = len(final_mask)
            if epoch in snapshot_epochs:
                snapshots[epoch] = Checkpoint.capture(params, opt, epoch, config_json,
                                                      final_mask.pairs)
            if epoch not in eval_at:
                continue
            try:
                pdd_value, val_acc, target_acc = evaluator(params)
            except ad.NonFiniteValue as exc:
                raise NonFiniteLoss(epoch, f"evaluation: {exc}") from exc
            rec = MetricsRecord(epoch, "nap" if nap_stage else "warmup", loss_value, pdd_value,
                                val_acc if val_acc is not None else float("nan"), target_acc,
                                mask_size)
            records.append(rec)
            log.debug("epoch %d %s loss=%.4f pdd=%.4f val=%.4f", epoch, rec.stage, loss_value,
                      pdd_value, rec.val_acc)
            if writer is not None:
                writer.writerow(rec.csv_row())
                fh.flush()
            if best is None or rec.val_acc > best.val_acc:
                best = Checkpoint.capture(params, opt, epoch, config_json, final_mask.pairs,
                                          rec.val_acc)
    finally:
        if fh is not None:
            fh.close()
        if dump is not None:
            dump.close()

    last = Checkpoint.capture(params, opt, cfg.epochs - 1, config_json, final_mask.pairs,
                              records[-1].val_acc if records else float("nan"))
    if best is None:
        best = last
    if out is not None:
        best.save(out / "best.npz")
        last.save(out / "last.npz")
    return TrainResult(cfg, split, records, best, last, final_mask, src, src_nodes, snapshots)


# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class AblationRow:
    q: float
    mean_final_pdd: float
    final_pdds: tuple[float, ...]


def ablation_config(cfg: TrainConfig, q: float, seed: int) -> TrainConfig:
    """Warm-up-only schedule over all epochs with CDP-removal ratio ``q``."""
    loss = replace(cfg.loss, cdp_removal_ratio=q, warmup_epochs=cfg.epochs)
    return replace(cfg, loss=loss, seed=seed)


def run_ablation_cdp_removal(cfg: TrainConfig, graph: Graph, q_values: Sequence[float],
                             seeds: Sequence[int], out_dir: str | Path | None = None) -> list[AblationRow]:
    """Final source PDD per removal ratio, averaged over ``seeds``.

    Per-run metrics go to ``out_dir/q=<q>/seed=<s>/metrics.csv`` and the
    summary to ``out_dir/ablation.csv``.
    """
    for q in q_values:
        if not 0.0 <= q <= 1.0:
            raise ValueError(f"removal ratio {q} outside [0, 1]")
    rows = []
    for q in q_values:
        finals = []
        for s in seeds:
            run_dir = None if out_dir is None else Path(out_dir) / f"q={q!r}" / f"seed={s}"
            res = train(ablation_config(cfg, q, s), graph, run_dir)
            finals.append(res.records[-1].pdd)
        rows.append(AblationRow(float(q), float(np.mean(finals)), tuple(finals)))
    if out_dir is not None:
        with open(Path(out_dir) / "ablation.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["q", "mean_final_pdd", "num_runs"])
            for row in rows:
                w.writerow([repr(row.q), repr(row.mean_final_pdd), len(row.final_pdds)])
    return rows
