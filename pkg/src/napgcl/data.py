"""Synthetic multi-domain SBM graphs, graph files, and source/validation/target domain splits."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .graph import Graph, InvariantViolation, check_graph, make_graph, validate_graph


class ConfigInvalid(ValueError):
    pass


class ParseError(ValueError):
    pass


class TooFewDomains(ValueError):
    pass


@dataclass(frozen=True)
class SyntheticConfig:
    """Per-domain stochastic block model with class-shared and domain-specific feature means.

    Node features are ``class_signal_strength * mu[class] + domain_shift_strength
    * nu[domain] + noise_std * N(0, I)`` with random unit vectors ``mu``, ``nu``.
    With ``domain_subspace_dim = k`` every ``nu`` is drawn uniformly from the unit
    sphere of one shared random ``k``-dimensional subspace, so unseen domains
    shift along the same directions as the training domains; ``None`` draws
    each ``nu`` from the whole feature space.
    """

    num_domains: int = 6
    num_classes: int = 3
    nodes_per_domain: int = 60
    num_features: int = 32
    intra_class_edge_prob: float = 0.2
    inter_class_edge_prob: float = 0.01
    class_signal_strength: float = 1.0
    domain_shift_strength: float = 2.0
    noise_std: float = 1.0
    domain_subspace_dim: int | None = 2
    seed: int = 0

    def validate(self) -> None:
        problems = []
        for name in ("num_domains", "num_classes", "nodes_per_domain", "num_features"):
            if getattr(self, name) < 1:
                problems.append(f"{name} must be >= 1")
        for name in ("intra_class_edge_prob", "inter_class_edge_prob"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                problems.append(f"{name} must lie in [0, 1]")
        if not self.intra_class_edge_prob > self.inter_class_edge_prob:
            problems.append("intra_class_edge_prob must exceed inter_class_edge_prob")
        for name in ("class_signal_strength", "domain_shift_strength", "noise_std"):
            if getattr(self, name) < 0:
                problems.append(f"{name} must be >= 0")
        k = self.domain_subspace_dim
        if k is not None and not 1 <= k <= self.num_features:
            problems.append("domain_subspace_dim must lie in [1, num_features]")
        if problems:
            raise ConfigInvalid("; ".join(problems))


def _unit_vectors(rng: np.random.Generator, count: int, dim: int) -> np.ndarray:
    v = rng.standard_normal((count, dim))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def generate(cfg: SyntheticConfig) -> Graph:
    """Disjoint union of one SBM per domain; domains occupy contiguous node ranges."""
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    mu = _unit_vectors(rng, cfg.num_classes, cfg.num_features)
    if cfg.domain_subspace_dim is None:
        nu = _unit_vectors(rng, cfg.num_domains, cfg.num_features)
    else:
        basis, _ = np.linalg.qr(rng.standard_normal((cfg.num_features, cfg.domain_subspace_dim)))
        nu = _unit_vectors(rng, cfg.num_domains, cfg.domain_subspace_dim) @ basis.T
    n = cfg.nodes_per_domain
    iu, ju = np.triu_indices(n, k=1)
    labels, domains, edges = [], [], []
    for d in range(cfg.num_domains):
        y = rng.integers(cfg.num_classes, size=n)
        prob = np.where(y[iu] == y[ju], cfg.intra_class_edge_prob, cfg.inter_class_edge_prob)
        hit = rng.random(len(iu)) < prob
        edges.append(np.stack([iu[hit], ju[hit]], axis=1) + d * n)
        labels.append(y)
        domains.append(np.full(n, d))
    y = np.concatenate(labels)
    dom = np.concatenate(domains)
    noise = rng.standard_normal((len(y), cfg.num_features))
    x = cfg.class_signal_strength * mu[y] + cfg.domain_shift_strength * nu[dom] + cfg.noise_std * noise
    return check_graph(make_graph(x, np.concatenate(edges), dom, y, cfg.num_domains, cfg.num_classes))


# ----------------------------------------------------------------------------
# graph files: one JSON document, floats written as shortest round-trip decimals

_FIELDS = ("num_nodes", "num_features", "num_domains", "num_classes", "features", "edges",
           "domains", "labels")


def graph_to_dict(g: Graph) -> dict:
    return {
        "num_nodes": g.num_nodes,
        "num_features": g.num_features,
        "num_domains": g.num_domains,
        "num_classes": g.num_classes,
        "features": g.features.tolist(),
        "edges": g.edges.tolist(),
        "domains": g.domains.tolist(),
        "labels": g.labels.tolist(),
    }


def save_graph(g: Graph, path: str | Path) -> None:
    check_graph(g)
    with open(path, "w") as fh:
        json.dump(graph_to_dict(g), fh, allow_nan=False)
        fh.write("\n")


def graph_from_dict(doc, source: str = "<graph>") -> Graph:
    if not isinstance(doc, dict):
        raise ParseError(f"{source}: top level must be an object")
    missing = [f for f in _FIELDS if f not in doc]
    if missing:
        raise ParseError(f"{source}: missing field(s) {', '.join(missing)}")
    for f in ("num_nodes", "num_features", "num_domains", "num_classes"):
        if not isinstance(doc[f], int) or isinstance(doc[f], bool) or doc[f] < 0:
            raise ParseError(f"{source}: field {f!r} must be a non-negative integer")
    n, nf = doc["num_nodes"], doc["num_features"]
    try:
        x = np.array(doc["features"], dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise ParseError(f"{source}: field 'features': {exc}") from None
    if x.size != n * nf or (x.size and x.shape != (n, nf)):
        raise ParseError(f"{source}: field 'features' has shape {x.shape}, expected ({n}, {nf})")
    x = x.reshape(n, nf)
    arrays = {}
    for f in ("edges", "domains", "labels"):
        vals = doc[f]
        flat = np.array(vals, dtype=object).ravel() if len(vals) else []
        if any(not isinstance(v, int) or isinstance(v, bool) for v in flat):
            raise ParseError(f"{source}: field {f!r} must contain integers only")
        arrays[f] = np.array(vals, dtype=np.int64)
    e = arrays["edges"]
    if len(e) and (e.ndim != 2 or e.shape[1] != 2):
        raise ParseError(f"{source}: field 'edges' must be a list of [u, v] pairs")
    for f in ("domains", "labels"):
        if arrays[f].shape != (n,):
            raise ParseError(f"{source}: field {f!r} has length {len(arrays[f])}, expected {n}")
    g = make_graph(x, e.reshape(-1, 2), arrays["domains"], arrays["labels"],
                   doc["num_domains"], doc["num_classes"])
    violations = validate_graph(g)
    if violations:
        raise InvariantViolation(violations)
    return g


def load_graph(path: str | Path) -> Graph:
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    return graph_from_dict(doc, str(path))


# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class DomainSplit:
    source: tuple[int, ...]
    val: tuple[int, ...]
    target: tuple[int, ...]

    def __post_init__(self):
        s, v, t = set(self.source), set(self.val), set(self.target)
        if s & v or s & t or v & t:
            raise ValueError(f"domain roles overlap: {self}")


def make_split(num_domains: int, n_source: int, n_val: int, n_target: int, seed) -> DomainSplit:
    """Seeded random assignment of domain ids to source/validation/target roles."""
    if min(n_source, n_val, n_target) < 1:
        raise TooFewDomains("every role needs at least one domain")
    if n_source + n_val + n_target > num_domains:
        raise TooFewDomains(f"{n_source}+{n_val}+{n_target} roles exceed {num_domains} domains")
    perm = np.random.default_rng(seed).permutation(num_domains).tolist()
    return DomainSplit(tuple(perm[:n_source]), tuple(perm[n_source:n_source + n_val]),
                       tuple(perm[n_source + n_val:n_source + n_val + n_target]))
