"""Edge dropping and feature-column masking for contrastive views."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .graph import Graph, normalized_adjacency


def _check_prob(p: float, name: str) -> None:
    if not 0.0 <= p < 1.0:
        raise ValueError(f"{name} must lie in [0, 1), got {p}")


@dataclass(frozen=True)
class AugmentConfig:
    drop_edge_prob: float = 0.0
    mask_feature_prob: float = 0.0

    def __post_init__(self):
        _check_prob(self.drop_edge_prob, "drop_edge_prob")
        _check_prob(self.mask_feature_prob, "mask_feature_prob")


@dataclass(frozen=True, eq=False)
class GraphView:
    graph: Graph
    adjacency: sp.csr_array
    seed: np.random.SeedSequence


def drop_edges(g: Graph, p: float, seed) -> Graph:
    """Remove each edge independently with probability ``p``."""
    _check_prob(p, "p")
    rng = np.random.default_rng(seed)
    keep = rng.random(g.num_edges) >= p
    return g.with_edges(g.edges[keep])


def mask_features(x: np.ndarray, p: float, seed) -> np.ndarray:
    """Zero each feature column (across all nodes) independently with probability ``p``."""
    _check_prob(p, "p")
    rng = np.random.default_rng(seed)
    masked = rng.random(x.shape[1]) < p
    out = np.array(x, dtype=np.float64, copy=True)
    out[:, masked] = 0.0
    return out


def as_seed_sequence(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


def child_seed(seed, k: int) -> np.random.SeedSequence:
    """The ``k``-th child stream of ``seed``; unlike ``spawn`` this never mutates its input."""
    ss = as_seed_sequence(seed)
    return np.random.SeedSequence(ss.entropy, spawn_key=ss.spawn_key + (k,),
                                  pool_size=ss.pool_size)


def augment(g: Graph, cfg: AugmentConfig, seed) -> GraphView:
    ss = as_seed_sequence(seed)
    edge_seed, feat_seed = child_seed(ss, 0), child_seed(ss, 1)
    out = drop_edges(g, cfg.drop_edge_prob, edge_seed)
    out = out.with_features(mask_features(g.features, cfg.mask_feature_prob, feat_seed))
    return GraphView(out, normalized_adjacency(out), ss)


def make_views(g: Graph, cfg_alpha: AugmentConfig, cfg_beta: AugmentConfig,
               seed) -> tuple[GraphView, GraphView]:
    """Two independently augmented views on distinct sub-streams of ``seed``."""
    return augment(g, cfg_alpha, child_seed(seed, 0)), augment(g, cfg_beta, child_seed(seed, 1))
