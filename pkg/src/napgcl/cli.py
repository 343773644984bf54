"""Command line: generate, train, eval, pdd, ablate-cdp, report-cdp-sim.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.
Every flag also has a config-file key (``--config``, JSON or YAML) with the
flag's name in snake_case; flags override the file.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import asdict, fields, replace
from pathlib import Path

import numpy as np
import yaml

from .data import SyntheticConfig, generate, load_graph, make_split, save_graph
from .graph import induced_subgraph
from .metrics import cdp_similarity_report, export_embeddings, load_embeddings, pdd
from .nn import Checkpoint
from .objective import SimilarityMask, cross_domain, nap_mask
from .train import Evaluator, TrainConfig, run_ablation_cdp_removal, train

log = logging.getLogger("napgcl")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


# (flag, dotted path into TrainConfig, type)
TRAIN_FLAGS: list[tuple[str, str, type]] = [
    ("epochs", "epochs", int),
    ("warmup-epochs", "loss.warmup_epochs", int),
    ("tau", "loss.tau", float),
    ("nap-ratio", "loss.nap_ratio", float),
    ("cdp-removal-ratio", "loss.cdp_removal_ratio", float),
    ("mask-refresh", "mask_refresh", str),
    ("drop-edge-alpha", "view_alpha.drop_edge_prob", float),
    ("mask-feature-alpha", "view_alpha.mask_feature_prob", float),
    ("drop-edge-beta", "view_beta.drop_edge_prob", float),
    ("mask-feature-beta", "view_beta.mask_feature_prob", float),
    ("embed-dim", "encoder.embed_dim", int),
    ("hidden-dim", "encoder.hidden_dim", int),
    ("num-layers", "encoder.num_layers", int),
    ("projection-head", "encoder.projection_head", bool),
    ("lr", "optim.lr", float),
    ("beta1", "optim.beta1", float),
    ("beta2", "optim.beta2", float),
    ("adam-eps", "optim.eps", float),
    ("probe-steps", "probe.steps", int),
    ("probe-lr", "probe.lr", float),
    ("probe-weight-decay", "probe.weight_decay", float),
    ("n-source", "split.n_source", int),
    ("n-val", "split.n_val", int),
    ("n-target", "split.n_target", int),
    ("split-seed", "split.seed", int),
    ("eval-every", "eval_every", int),
    ("max-nodes", "max_nodes", int),
]


def _dest(flag: str) -> str:
    return flag.replace("-", "_")


def _get(doc: dict, path: str):
    for key in path.split("."):
        doc = doc[key]
    return doc


def _set(doc: dict, path: str, value) -> None:
    *head, last = path.split(".")
    for key in head:
        doc = doc[key]
    doc[last] = value


def _bool(text: str) -> bool:
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    defaults = asdict(TrainConfig())
    g = p.add_argument_group("training configuration")
    for flag, path, typ in TRAIN_FLAGS:
        kw = dict(dest=_dest(flag), default=argparse.SUPPRESS,
                  help=f"(default: {_get(defaults, path)})")
        if typ is bool:
            kw["type"] = _bool
        elif flag == "hidden-dim":
            kw["type"] = int
            kw["help"] = "(default: 2 x embed-dim)"
        else:
            kw["type"] = typ
        if flag == "mask-refresh":
            kw["choices"] = ["every-epoch", "once"]
        g.add_argument(f"--{flag}", **kw)
    g.add_argument("--seeds", type=int, nargs="+", default=argparse.SUPPRESS,
                   help="training seeds, one run each (default: 0)")


def _read_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        doc = yaml.safe_load(Path(path).read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from None
    if doc is None:
        return {}
    if not isinstance(doc, dict):
        raise UsageError(f"config file {path} must hold a mapping")
    return {k.replace("-", "_"): v for k, v in doc.items()}


def build_train_config(args: argparse.Namespace) -> tuple[TrainConfig, list[int]]:
    """Defaults, then config-file values, then explicit flags."""
    merged = _read_config_file(getattr(args, "config", None))
    known = {_dest(f) for f, _, _ in TRAIN_FLAGS} | {"seeds"}
    unknown = sorted(set(merged) - known)
    if unknown:
        raise UsageError(f"unknown config key(s): {', '.join(unknown)}")
    merged.update({k: v for k, v in vars(args).items() if k in known})
    doc = asdict(TrainConfig())
    for flag, path, _ in TRAIN_FLAGS:
        if _dest(flag) in merged:
            _set(doc, path, merged[_dest(flag)])
    seeds = merged.get("seeds", [0])
    seeds = [seeds] if isinstance(seeds, int) else list(seeds)
    try:
        cfg = TrainConfig.from_dict(doc)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid configuration: {exc}") from None
    return replace(cfg, seed=seeds[0]), seeds


def build_synthetic_config(args: argparse.Namespace) -> SyntheticConfig:
    merged = _read_config_file(args.config)
    names = {f.name for f in fields(SyntheticConfig)}
    unknown = sorted(set(merged) - names)
    if unknown:
        raise UsageError(f"unknown config key(s): {', '.join(unknown)}")
    merged.update({k: v for k, v in vars(args).items() if k in names})
    cfg = SyntheticConfig(**merged)
    try:
        cfg.validate()
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return cfg


# ----------------------------------------------------------------------------
# subcommands

def cmd_generate(args) -> int:
    cfg = build_synthetic_config(args)
    g = generate(cfg)
    save_graph(g, args.out)
    print(f"wrote {args.out}: {g.num_nodes} nodes, {g.num_edges} edges, {g.num_domains} domains")
    return 0


def cmd_train(args) -> int:
    cfg, seeds = build_train_config(args)
    graph = load_graph(args.graph)
    out = Path(args.out_dir)
    summary = []
    for s in seeds:
        run_cfg = replace(cfg, seed=s)
        run_dir = out if len(seeds) == 1 else out / f"seed={s}"
        run_dir.mkdir(parents=True, exist_ok=True)
        dump = args.mask_dump
        if dump and len(seeds) > 1:
            dump = run_dir / Path(dump).name
        res = train(run_cfg, graph, run_dir, mask_dump=dump)
        best_rec = next(r for r in res.records if r.epoch == res.best.epoch)
        if args.export_embeddings:
            h = Evaluator(graph, res.split, cfg.probe).embed(res.best.params)
            export_embeddings(h, graph.domains, graph.labels, run_dir / "embeddings.csv")
        summary.append((s, res.best.epoch, best_rec.val_acc, best_rec.target_acc,
                        res.records[-1].pdd))
        print(f"seed {s}: best epoch {res.best.epoch} val_acc {best_rec.val_acc:.4f} "
              f"target_acc {best_rec.target_acc if best_rec.target_acc is not None else float('nan'):.4f} "
              f"final_pdd {res.records[-1].pdd:.4f}")
    if len(seeds) > 1:
        arr = np.array([[v, t if t is not None else np.nan, p] for _, _, v, t, p in summary])
        with open(out / "summary.csv", "w") as fh:
            fh.write("seed,best_epoch,val_acc,target_acc,final_pdd\n")
            for s, e, v, t, p in summary:
                fh.write(f"{s},{e},{v!r},{'' if t is None else repr(t)},{p!r}\n")
            m = [float(x) for x in arr.mean(axis=0)]
            fh.write(f"mean,,{m[0]!r},{m[1]!r},{m[2]!r}\n")
        print(f"mean over {len(seeds)} seeds: val_acc {m[0]:.4f} target_acc {m[1]:.4f} "
              f"final_pdd {m[2]:.4f}")
    return 0


def _checkpoint_context(path, graph_path):
    ckpt = Checkpoint.load(path)
    cfg = TrainConfig.from_dict(ckpt.config)
    graph = load_graph(graph_path)
    return ckpt, cfg, graph


def cmd_eval(args) -> int:
    ckpt, cfg, graph = _checkpoint_context(args.checkpoint, args.graph)
    s = cfg.split
    split = make_split(graph.num_domains, s.n_source, s.n_val, s.n_target, s.seed)
    ev = Evaluator(graph, split, cfg.probe)
    h = ev.embed(ckpt.params)
    print("split,domains,accuracy")
    for name, rows, doms in (("source", ev.src, split.source), ("val", ev.val, split.val),
                             ("target", ev.tgt, split.target)):
        acc = ev.accuracy(h, rows)
        print(f"{name},{' '.join(map(str, doms))},{acc!r}")
    print(f"source_pdd,,{pdd(h[ev.src], graph.domains[ev.src]).value!r}")
    return 0


def cmd_pdd(args) -> int:
    h, domains, _ = load_embeddings(args.embeddings)
    if args.domains:
        keep = np.isin(domains, args.domains)
        h, domains = h[keep], domains[keep]
    for line in pdd(h, domains).rows():
        print(line)
    return 0


def cmd_ablate(args) -> int:
    # the ablation trains warm-up only, so the warm-up length always follows --epochs
    if not hasattr(args, "warmup_epochs"):
        args.warmup_epochs = getattr(args, "epochs", TrainConfig().epochs)
    cfg, seeds = build_train_config(args)
    graph = load_graph(args.graph)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = run_ablation_cdp_removal(cfg, graph, args.q_values, seeds, out)
    print("q,mean_final_pdd,num_runs")
    for r in rows:
        print(f"{r.q!r},{r.mean_final_pdd!r},{len(r.final_pdds)}")
    return 0


def _last_epoch_mask(path) -> SimilarityMask:
    rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if rows.size == 0:
        return SimilarityMask.empty()
    last = int(rows[:, 0].max())
    sel = rows[rows[:, 0] == last]
    return SimilarityMask(sel[:, 1:3].astype(np.int64), last, len(sel))


def cmd_report(args) -> int:
    ckpt, cfg, graph = _checkpoint_context(args.checkpoint, args.graph)
    s = cfg.split
    split = make_split(graph.num_domains, s.n_source, s.n_val, s.n_target, s.seed)
    src, src_nodes = induced_subgraph(graph, split.source)
    h = Evaluator(graph, split, cfg.probe).embed(ckpt.params)[src_nodes]
    if args.mask_dump:
        mask = _last_epoch_mask(args.mask_dump)
    else:
        ratio = cfg.loss.nap_ratio if args.nap_ratio is None else args.nap_ratio
        mask, _ = nap_mask(h, h, src.domains, ratio)
    if not cross_domain(src.domains).any():
        raise UsageError("source graph has a single domain")
    print("space,set,mean_cosine,count")
    for vectors, name in ((src.features, "input_feature"), (h, "embedding")):
        rep = cdp_similarity_report(vectors, src.domains, mask, name)
        for line in rep.rows()[1:]:
            print(line)
    return 0


def make_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="napgcl", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log per-epoch metrics")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    gen = sub.add_parser("generate", help="write a synthetic multi-domain graph file")
    gen.add_argument("--out", required=True, help="output graph file (JSON)")
    gen.add_argument("--config", help="JSON/YAML file with generator fields")
    defaults = SyntheticConfig()
    for f in fields(SyntheticConfig):
        typ = float if f.type in ("float", float) else int
        gen.add_argument(f"--{f.name.replace('_', '-')}", dest=f.name, type=typ,
                         default=argparse.SUPPRESS, help=f"(default: {getattr(defaults, f.name)})")
    gen.set_defaults(func=cmd_generate)

    tr = sub.add_parser("train", help="train an encoder on a graph file")
    tr.add_argument("--graph", required=True, help="graph file from `generate` (JSON)")
    tr.add_argument("--out-dir", required=True, help="directory for metrics.csv and checkpoints")
    tr.add_argument("--config", help="JSON/YAML file with training fields")
    tr.add_argument("--mask-dump", help="write promoted pairs as epoch,i,j,similarity lines")
    tr.add_argument("--export-embeddings", action="store_true",
                    help="write embeddings.csv of the best checkpoint")
    _add_train_flags(tr)
    tr.set_defaults(func=cmd_train)

    ev = sub.add_parser("eval", help="probe accuracy per split for a checkpoint")
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--graph", required=True)
    ev.set_defaults(func=cmd_eval)

    pd = sub.add_parser("pdd", help="pairwise domain discrepancy of an embedding export")
    pd.add_argument("--embeddings", required=True, help="CSV written by --export-embeddings")
    pd.add_argument("--domains", type=int, nargs="+", help="restrict to these domain ids")
    pd.set_defaults(func=cmd_pdd)

    ab = sub.add_parser("ablate-cdp", help="final PDD against the cross-domain negative removal ratio")
    ab.add_argument("--graph", required=True)
    ab.add_argument("--out-dir", required=True)
    ab.add_argument("--config", help="JSON/YAML file with training fields")
    ab.add_argument("--q-values", type=float, nargs="+", default=[0.0, 0.5, 1.0],
                    help="removal ratios (default: 0.0 0.5 1.0)")
    _add_train_flags(ab)
    ab.set_defaults(func=cmd_ablate)

    rp = sub.add_parser("report-cdp-sim", help="cosine similarity of promoted vs other cross-domain pairs")
    rp.add_argument("--checkpoint", required=True)
    rp.add_argument("--graph", required=True)
    rp.add_argument("--mask-dump", help="use the last epoch's pairs from this dump")
    rp.add_argument("--nap-ratio", type=float, default=None,
                    help="selection ratio when recomputing the mask (default: checkpoint's)")
    rp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"napgcl {args.command}: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        print(f"napgcl {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
