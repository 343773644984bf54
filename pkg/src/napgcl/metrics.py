"""Domain discrepancy, cross-domain-pair similarity, linear probing and embedding export."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .objective import SimilarityMask, cross_domain


class FewerThanTwoDomains(ValueError):
    pass


class DegenerateLabels(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class PddReport:
    value: float
    pair_distances: dict[tuple[int, int], float]
    centers: np.ndarray  # (P, D), row k is the center of domain ``domain_ids[k]``
    domain_ids: tuple[int, ...]

    def rows(self) -> list[str]:
        lines = ["p,q,distance"]
        lines += [f"{p},{q},{d!r}" for (p, q), d in self.pair_distances.items()]
        lines.append(f"pdd,{self.value!r}")
        return lines


def domain_centers(h, domains) -> tuple[np.ndarray, np.ndarray]:
    h = np.asarray(h, dtype=np.float64)
    ids, inverse = np.unique(np.asarray(domains), return_inverse=True)
    centers = np.zeros((len(ids), h.shape[1]))
    np.add.at(centers, inverse, h)
    centers /= np.bincount(inverse, minlength=len(ids))[:, None]
    return ids, centers


def pdd(h, domains) -> PddReport:
    """Mean Euclidean distance between every pair of domain centers."""
    ids, centers = domain_centers(h, domains)
    if len(ids) < 2:
        raise FewerThanTwoDomains(f"need at least two domains, got {len(ids)}")
    dist = np.linalg.norm(centers[:, None, :] - centers[None, :, :], axis=-1)
    p_idx, q_idx = np.triu_indices(len(ids), k=1)
    pairs = {(int(ids[p]), int(ids[q])): float(dist[p, q]) for p, q in zip(p_idx, q_idx)}
    value = float(np.mean(dist[p_idx, q_idx]))
    return PddReport(value, pairs, centers, tuple(int(i) for i in ids))


@dataclass(frozen=True)
class CdpSimilarityReport:
    space: str
    all_mean: float
    transformed_mean: float | None
    remaining_mean: float | None
    num_all: int
    num_transformed: int
    num_remaining: int

    def rows(self) -> list[str]:
        def fmt(x):
            return "" if x is None else repr(x)

        return [
            "space,set,mean_cosine,count",
            f"{self.space},all,{fmt(self.all_mean)},{self.num_all}",
            f"{self.space},transformed,{fmt(self.transformed_mean)},{self.num_transformed}",
            f"{self.space},remaining,{fmt(self.remaining_mean)},{self.num_remaining}",
        ]


def cdp_similarity_report(vectors, domains, mask: SimilarityMask, space_name: str) -> CdpSimilarityReport:
    """Mean cosine similarity over all, promoted and non-promoted ordered cross-domain pairs.

    An empty set has no mean and is reported as ``None``.
    """
    x = np.asarray(vectors, dtype=np.float64)
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    u = np.divide(x, norms, out=np.zeros_like(x), where=norms > 0)
    sim = u @ u.T
    cd = cross_domain(domains)
    n_all = int(cd.sum())
    if n_all == 0:
        raise ValueError("no cross-domain pairs")
    chosen = np.zeros_like(cd)
    pairs = np.asarray(mask.pairs, dtype=np.int64).reshape(-1, 2)
    if len(pairs):
        if pairs.max() >= len(x) or pairs.min() < 0:
            raise ValueError("mask pair index out of range")
        chosen[pairs[:, 0], pairs[:, 1]] = True
    if np.any(chosen & ~cd):
        raise ValueError("mask contains a same-domain pair")
    rest = cd & ~chosen

    def mean_over(sel):
        return float(sim[sel].mean()) if sel.any() else None

    return CdpSimilarityReport(space_name, mean_over(cd), mean_over(chosen), mean_over(rest),
                               n_all, int(chosen.sum()), int(rest.sum()))


@dataclass(frozen=True)
class ProbeConfig:
    steps: int = 500
    lr: float = 0.1
    weight_decay: float = 1e-4

    def __post_init__(self):
        if self.steps < 1 or self.lr <= 0 or self.weight_decay < 0:
            raise ValueError(f"invalid probe config {self}")


def fit_probe(train_emb, train_labels, cfg: ProbeConfig = ProbeConfig(), num_classes: int | None = None):
    """Multinomial logistic regression by full-batch gradient descent.

    Features are standardized with the training split's statistics. Returns a
    ``predict(emb) -> labels`` callable.
    """
    x = np.asarray(train_emb, dtype=np.float64)
    y = np.asarray(train_labels, dtype=np.int64)
    if len(np.unique(y)) < 2:
        raise DegenerateLabels("training split contains a single class")
    k = int(y.max()) + 1 if num_classes is None else num_classes
    mu = x.mean(axis=0)
    sd = x.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    xs = (x - mu) / sd
    n, d = xs.shape
    onehot = np.zeros((n, k))
    onehot[np.arange(n), y] = 1.0
    w = np.zeros((d, k))
    b = np.zeros(k)
    for _ in range(cfg.steps):
        logits = xs @ w + b
        logits -= logits.max(axis=1, keepdims=True)
        p = np.exp(logits)
        p /= p.sum(axis=1, keepdims=True)
        err = (p - onehot) / n
        w -= cfg.lr * (xs.T @ err + cfg.weight_decay * w)
        b -= cfg.lr * err.sum(axis=0)

    def predict(emb) -> np.ndarray:
        z = (np.asarray(emb, dtype=np.float64) - mu) / sd
        return np.argmax(z @ w + b, axis=1)

    return predict


def linear_probe(train_emb, train_labels, test_emb, test_labels, probe_cfg: ProbeConfig = ProbeConfig(),
                 seed=None) -> float:
    """Top-1 test accuracy of a logistic probe fit on frozen embeddings.

    The probe starts from zero weights and is fully deterministic; ``seed``
    is accepted for interface symmetry and unused.
    """
    test_labels = np.asarray(test_labels)
    k = int(max(np.max(train_labels), np.max(test_labels))) + 1
    predict = fit_probe(train_emb, train_labels, probe_cfg, k)
    return float(np.mean(predict(test_emb) == test_labels))


def export_embeddings(h, domains, labels, path: str | Path) -> None:
    h = np.asarray(h, dtype=np.float64)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["node_id", "domain", "label"] + [f"e{k}" for k in range(h.shape[1])])
        for i, (row, d, y) in enumerate(zip(h, domains, labels)):
            w.writerow([i, int(d), int(y)] + [repr(float(v)) for v in row])


def load_embeddings(path: str | Path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Inverse of :func:`export_embeddings`: ``(h, domains, labels)``."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:3] != ["node_id", "domain", "label"]:
            raise ValueError(f"{path}: unexpected header {header[:3]}")
        rows = list(reader)
    dim = len(header) - 3
    h = np.array([[float(v) for v in r[3:]] for r in rows], dtype=np.float64).reshape(len(rows), dim)
    domains = np.array([int(r[1]) for r in rows], dtype=np.int64)
    labels = np.array([int(r[2]) for r in rows], dtype=np.int64)
    return h, domains, labels
