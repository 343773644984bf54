"""Acceptance criteria, one test each; every test records a PASS/FAIL line in the terminal summary.

Benchmark criteria share one generated graph (generator seed 0, default
config) and three training seeds. "PDD at epoch k" means the record logged
after epoch k's update, so the end of warm-up is epoch n - 1 and the end of
training is epoch E - 1.
"""

import subprocess
import sys
import time

import numpy as np
import pytest

from napgcl import autodiff as ad
from napgcl.data import SyntheticConfig, generate, load_graph, save_graph
from napgcl.experiments import (RunSummary, benchmark_graph, final_cdp_similarity, mean,
                                with_ratio)
from napgcl.graph import normalized_adjacency
from napgcl.nn import EncoderConfig, EncoderParams, gcn_propagate
from napgcl.objective import (LossConfig, SimilarityMask, cdp_removal_loss, contrastive_loss,
                              cosine_similarity_matrix, count_cross_domain, nap_mask, select_top_r,
                              warmup_loss)
from napgcl.metrics import pdd
from napgcl.train import TrainConfig, run_ablation_cdp_removal, train

import oracles
from conftest import ACCEPTANCE_LINES, random_graph
from gradcheck import check_param_grads
from test_nn import dense_gcn

SEEDS = (0, 1, 2)


def report(number: int, name: str, ok: bool, detail: str) -> None:
    ACCEPTANCE_LINES.append(f"criterion {number} [{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    assert ok, f"criterion {number} ({name}) failed: {detail}"


@pytest.fixture(scope="session")
def graph():
    return benchmark_graph()


@pytest.fixture(scope="session")
def pairs(graph):
    """(InfoNCE-only, promoted) results per seed plus wall time of each InfoNCE run."""
    out = {}
    for s in SEEDS:
        start = time.perf_counter()
        base = train(with_ratio(TrainConfig(), 0.0, s), graph)
        elapsed = time.perf_counter() - start
        nap = train(with_ratio(TrainConfig(), 0.01, s), graph)
        out[s] = (base, nap, elapsed)
    return out


def test_criterion_1_gradient_fidelity():
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst = 0.0
    instances = 0
    for _ in range(24):
        n = int(rng.integers(4, 11))
        dim = int(rng.integers(2, 5))
        p = int(rng.integers(2, 4))
        domains = rng.permutation(np.arange(n) % p)
        a = ad.Tensor(rng.standard_normal((n, dim)), True)
        b = ad.Tensor(rng.standard_normal((n, dim)), True)
        tau = float(rng.uniform(0.3, 1.0))
        cfg = LossConfig(tau=tau)
        losses = [lambda: warmup_loss(a, b, cfg)]
        for rho in (0.1, 0.5):
            mask, _ = nap_mask(a.value, b.value, domains, rho)
            losses.append(lambda mask=mask: contrastive_loss(a, b, mask, cfg, domains))
        seed = int(rng.integers(1 << 30))
        losses.append(lambda: cdp_removal_loss(a, b, 0.5, seed, cfg, domains))
        for f in losses:
            worst = max(worst, *check_param_grads(f, [a, b]))
        instances += 1
    elapsed = time.perf_counter() - start
    report(1, "gradient fidelity", worst < 1e-5 and elapsed < 60 and instances >= 20,
           f"{instances} instances x 4 losses, max relative error {worst:.2e}, {elapsed:.1f}s")


def test_criterion_2_oracle_equivalences():
    rng = np.random.default_rng(7)
    errs = {}
    h = rng.standard_normal((30, 4))
    d = rng.permutation(np.arange(30) % 4)
    errs["pdd"] = abs(pdd(h, d).value - oracles.pdd(h, d))
    a, b = rng.standard_normal((6, 3)), rng.standard_normal((6, 3))
    cos = cosine_similarity_matrix(a, b)
    errs["cosine"] = max(abs(cos[i, j] - oracles.cos(a[i], b[j])) for i in range(6) for j in range(6))
    topr_ok = True
    for domains in ([0, 0, 1, 1], [0, 1, 1, 1], [0, 0, 1, 1, 1], [0, 1, 2, 0, 1]):
        m = rng.integers(1, 4, size=(len(domains), len(domains))).astype(float)
        for r in range(count_cross_domain(domains) + 1):
            got = sorted(map(tuple, select_top_r(m, domains, r).pairs.tolist()))
            topr_ok &= got == [tuple(p) for p in oracles.top_r_by_enumeration(m, domains, r)]
    errs["infonce"] = abs(contrastive_loss(a, b, SimilarityMask.empty(), LossConfig()).item()
                          - oracles.contrastive_loss(a, b, 0.5))
    g = random_graph(rng, 8, num_features=5, edge_prob=0.4)
    params = EncoderParams.init(5, EncoderConfig(embed_dim=3, hidden_dim=6), seed=1)
    adj = np.zeros((8, 8))
    for u, v in g.edges:
        adj[u, v] = adj[v, u] = 1
    adj += np.eye(8)
    dinv = np.diag(1 / np.sqrt(adj.sum(1)))
    dense = dense_gcn(dinv @ adj @ dinv, g.features, [w.value for w in params.weights])
    errs["gcn"] = float(np.abs(gcn_propagate(normalized_adjacency(g), g.features, params).value - dense).max())
    ok = topr_ok and max(errs.values()) <= 1e-12
    report(2, "oracle equivalences", ok,
           f"top-r enumeration {'match' if topr_ok else 'MISMATCH'}, "
           + ", ".join(f"{k} {v:.1e}" for k, v in errs.items()))


def test_criterion_3_mask_monotonicity():
    rng = np.random.default_rng(11)
    failures = 0
    trials = 150
    for _ in range(trials):
        n = int(rng.integers(3, 9))
        domains = rng.permutation(np.arange(n) % int(rng.integers(2, 4)))
        a, b = rng.standard_normal((n, 3)), rng.standard_normal((n, 3))
        cfg = LossConfig(tau=float(rng.uniform(0.2, 2.0)))
        cd = np.argwhere(domains[:, None] != domains[None, :])
        picked = rng.random(len(cd)) < 0.4
        rest = cd[~picked]
        if not len(rest):
            picked[0] = False
            rest = cd[~picked]
        base = cd[picked]
        extra = rest[rng.integers(len(rest))]
        before = contrastive_loss(a, b, SimilarityMask(base.reshape(-1, 2)), cfg, domains).item()
        after = contrastive_loss(a, b, SimilarityMask(np.vstack([base.reshape(-1, 2), extra])),
                                 cfg, domains).item()
        failures += not after < before
    report(3, "mask monotonicity", failures == 0, f"{trials - failures}/{trials} strict decreases")


def test_criterion_4_pdd_grows_during_infonce(pairs):
    rows = [RunSummary.of(pairs[s][0]) for s in SEEDS]
    grew = sum(r.final_pdd > r.pdd_end_of_warmup for r in rows)
    slowest = max(pairs[s][2] for s in SEEDS)
    detail = "; ".join(f"seed {r.seed}: {r.pdd_end_of_warmup:.3f} -> {r.final_pdd:.3f}" for r in rows)
    report(4, "PDD grows during InfoNCE training", grew >= 2 and slowest < 180,
           f"{grew}/3 seeds grow ({detail}), slowest run {slowest:.0f}s")


def test_criterion_5_removal_ablation(graph):
    start = time.perf_counter()
    rows = run_ablation_cdp_removal(TrainConfig(), graph, [0.0, 0.5, 1.0], SEEDS)
    elapsed = time.perf_counter() - start
    means = [r.mean_final_pdd for r in rows]
    monotone = all(x >= y for x, y in zip(means, means[1:]))
    report(5, "PDD falls as more cross-domain negatives are removed", monotone and elapsed < 600,
           "mean final PDD " + ", ".join(f"q={r.q}: {r.mean_final_pdd:.4f}" for r in rows)
           + f", {elapsed:.0f}s")


def test_criterion_6_nap_effect(pairs):
    base = [RunSummary.of(pairs[s][0]) for s in SEEDS]
    nap = [RunSummary.of(pairs[s][1]) for s in SEEDS]
    pdd_base, pdd_nap = mean(r.final_pdd for r in base), mean(r.final_pdd for r in nap)
    acc_base, acc_nap = mean(r.best_target_acc for r in base), mean(r.best_target_acc for r in nap)
    diff = acc_nap - acc_base
    ok_a = pdd_nap < pdd_base
    ok_b = acc_nap >= acc_base - 0.01 and diff > 0
    report(6, "promoted positives lower PDD and keep target accuracy", ok_a and ok_b,
           f"(a) final PDD {pdd_nap:.4f} vs {pdd_base:.4f}; (b) target accuracy at best-val "
           f"checkpoint {acc_nap:.4f} vs {acc_base:.4f} (diff {diff:+.4f})")


def test_criterion_7_cdp_similarity_ordering(graph, pairs):
    reps = [final_cdp_similarity(pairs[s][1], graph) for s in SEEDS]
    ok = all(r.transformed_mean > r.all_mean > r.remaining_mean for r in reps)
    detail = "; ".join(f"seed {s}: {r.transformed_mean:.4f} > {r.all_mean:.4f} > {r.remaining_mean:.4f}"
                       for s, r in zip(SEEDS, reps))
    report(7, "promoted pairs most similar", ok, detail)


def test_criterion_8_cli_determinism(tmp_path):
    graph_file = tmp_path / "graph.json"
    save_graph(benchmark_graph(), graph_file)
    blobs = []
    for name in ("a", "b"):
        cmd = [sys.executable, "-m", "napgcl.cli", "train", "--graph", str(graph_file),
               "--out-dir", str(tmp_path / name), "--seeds", "3"]
        subprocess.run(cmd, check=True, capture_output=True)
        blobs.append((tmp_path / name / "metrics.csv").read_bytes())
    report(8, "identical train invocations give identical metrics", blobs[0] == blobs[1],
           f"{len(blobs[0])} bytes each, {'identical' if blobs[0] == blobs[1] else 'DIFFERENT'}")


def test_criterion_9_graph_round_trip(tmp_path):
    rng = np.random.default_rng(99)
    mismatches = 0
    for k in range(50):
        cfg = SyntheticConfig(num_domains=int(rng.integers(2, 7)), num_classes=int(rng.integers(2, 5)),
                              nodes_per_domain=int(rng.integers(1, 30)),
                              num_features=int(rng.integers(1, 16)), seed=int(rng.integers(1 << 31)),
                              domain_subspace_dim=1)
        g = generate(cfg)
        save_graph(g, tmp_path / f"{k}.json")
        mismatches += load_graph(tmp_path / f"{k}.json") != g
    report(9, "graph file round trip", mismatches == 0, f"{50 - mismatches}/50 graphs equal after reload")
