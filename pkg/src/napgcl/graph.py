"""Multi-domain node-classification graphs and GCN adjacency normalization."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
import scipy.sparse as sp


class Violation(NamedTuple):
    kind: str
    index: int

    def __str__(self) -> str:
        return f"{self.kind}({self.index})"


class InvariantViolation(ValueError):
    """Raised when a graph fails validation; carries every violation found."""

    def __init__(self, violations: Sequence[Violation]):
        self.violations = list(violations)
        super().__init__("invalid graph: " + ", ".join(map(str, self.violations)))


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected graph with per-node features, domain ids and class labels.

    Edges are stored once per undirected pair as rows ``(u, v)`` with
    ``u < v``, sorted lexicographically. Use :func:`make_graph` to build one
    from arbitrary edge lists.
    """

    features: np.ndarray  # (N, F) float64
    edges: np.ndarray  # (M, 2) int64
    domains: np.ndarray  # (N,) int64
    labels: np.ndarray  # (N,) int64
    num_domains: int
    num_classes: int

    @property
    def num_nodes(self) -> int:
        return self.features.shape[0]

    @property
    def num_features(self) -> int:
        return self.features.shape[1]

    @property
    def num_edges(self) -> int:
        return self.edges.shape[0]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Graph):
            return NotImplemented
        return (
            self.num_domains == other.num_domains
            and self.num_classes == other.num_classes
            and self.features.shape == other.features.shape
            and self.features.tobytes() == other.features.tobytes()
            and np.array_equal(self.edges, other.edges)
            and np.array_equal(self.domains, other.domains)
            and np.array_equal(self.labels, other.labels)
        )

    __hash__ = None  # type: ignore[assignment]

    def with_features(self, features: np.ndarray) -> Graph:
        return Graph(_frozen(np.asarray(features, dtype=np.float64)), self.edges,
                     self.domains, self.labels, self.num_domains, self.num_classes)

    def with_edges(self, edges: np.ndarray) -> Graph:
        return Graph(self.features, _frozen(np.asarray(edges, dtype=np.int64).reshape(-1, 2)),
                     self.domains, self.labels, self.num_domains, self.num_classes)


def make_graph(features, edges, domains, labels, num_domains: int | None = None,
               num_classes: int | None = None) -> Graph:
    """Build a :class:`Graph`, canonicalizing each edge to ``(min, max)`` and sorting.

    Duplicates and self-loops are kept so that :func:`validate_graph` can
    report them; ``num_domains``/``num_classes`` default to ``max + 1``.
    """
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"features must be 2-D, got shape {x.shape}")
    e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if len(e):
        e = np.sort(e, axis=1)
        e = e[np.lexsort((e[:, 1], e[:, 0]))]
    d = np.asarray(domains, dtype=np.int64).reshape(-1)
    y = np.asarray(labels, dtype=np.int64).reshape(-1)
    if num_domains is None:
        num_domains = int(d.max()) + 1 if len(d) else 0
    if num_classes is None:
        num_classes = int(y.max()) + 1 if len(y) else 0
    return Graph(_frozen(x), _frozen(e), _frozen(d), _frozen(y), int(num_domains), int(num_classes))


def validate_graph(g: Graph) -> list[Violation]:
    """Return every violated invariant of ``g`` (empty list when valid)."""
    out: list[Violation] = []
    n = g.num_nodes
    if g.domains.shape != (n,):
        out.append(Violation("ShapeMismatch", len(g.domains)))
    if g.labels.shape != (n,):
        out.append(Violation("ShapeMismatch", len(g.labels)))
    seen: set[tuple[int, int]] = set()
    for u, v in g.edges.tolist():
        for end in (u, v):
            if end < 0 or end >= n:
                out.append(Violation("EdgeOutOfRange", end))
        if u == v:
            out.append(Violation("SelfLoopInInput", u))
        key = (min(u, v), max(u, v))
        if key in seen:
            out.append(Violation("DuplicateEdge", key[0]))
        seen.add(key)
    for i, d in enumerate(g.domains.tolist()):
        if d < 0 or d >= g.num_domains:
            out.append(Violation("BadDomain", i))
    present = set(g.domains.tolist())
    for d in range(g.num_domains):
        if d not in present:
            out.append(Violation("EmptyDomain", d))
    for i, y in enumerate(g.labels.tolist()):
        if y < 0 or y >= g.num_classes:
            out.append(Violation("BadLabel", i))
    bad = np.argwhere(~np.isfinite(g.features))
    for i in np.unique(bad[:, 0]).tolist():
        out.append(Violation("NonFiniteFeature", i))
    return out


def check_graph(g: Graph) -> Graph:
    violations = validate_graph(g)
    if violations:
        raise InvariantViolation(violations)
    return g


def normalized_adjacency(g: Graph) -> sp.csr_array:
    """``D^-1/2 (A + I) D^-1/2`` as a CSR array (self-loops included)."""
    n = g.num_nodes
    u, v = g.edges[:, 0], g.edges[:, 1]
    deg = np.bincount(u, minlength=n) + np.bincount(v, minlength=n) + 1.0
    diag = np.arange(n)
    rows = np.concatenate([u, v, diag])
    cols = np.concatenate([v, u, diag])
    vals = 1.0 / np.sqrt(deg[rows] * deg[cols])
    return sp.csr_array((vals, (rows, cols)), shape=(n, n))


def induced_subgraph(g: Graph, domain_ids: Sequence[int]) -> tuple[Graph, np.ndarray]:
    """Restrict ``g`` to the nodes of ``domain_ids``.

    Domains are renumbered ``0..len(domain_ids)-1`` in the given order. Returns
    the subgraph and the original node index of each kept node.
    """
    domain_ids = list(domain_ids)
    remap = np.full(g.num_domains, -1, dtype=np.int64)
    remap[domain_ids] = np.arange(len(domain_ids))
    keep = np.flatnonzero(remap[g.domains] >= 0)
    new_index = np.full(g.num_nodes, -1, dtype=np.int64)
    new_index[keep] = np.arange(len(keep))
    e = new_index[g.edges] if len(g.edges) else g.edges
    e = e[(e >= 0).all(axis=1)] if len(e) else e.reshape(0, 2)
    sub = make_graph(g.features[keep], e, remap[g.domains[keep]], g.labels[keep],
                     len(domain_ids), g.num_classes)
    return sub, keep
