"""Contrastive objectives: InfoNCE warm-up, Negative-as-Positive promotion, CDP removal."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


@dataclass(frozen=True)
class LossConfig:
    tau: float = 0.5
    nap_ratio: float = 0.01
    warmup_epochs: int = 50
    cdp_removal_ratio: float = 0.0

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        for name in ("nap_ratio", "cdp_removal_ratio"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {getattr(self, name)}")
        if self.warmup_epochs < 0:
            raise ValueError("warmup_epochs must be >= 0")


@dataclass(frozen=True, eq=False)
class SimilarityMask:
    """Ordered cross-domain pairs ``(i, j)`` promoted to positives."""

    pairs: np.ndarray  # (k, 2) int64, in selection order
    epoch: int = -1
    r: int = 0

    def __len__(self) -> int:
        return len(self.pairs)

    @classmethod
    def empty(cls, epoch: int = -1) -> SimilarityMask:
        return cls(np.zeros((0, 2), dtype=np.int64), epoch, 0)

    def dense(self, n: int) -> np.ndarray:
        m = np.zeros((n, n))
        if len(self.pairs):
            m[self.pairs[:, 0], self.pairs[:, 1]] = 1.0
        return m


def _as_2d(h) -> np.ndarray:
    return np.asarray(h.value if isinstance(h, Tensor) else h, dtype=np.float64)


def _unit_rows(h: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(h, axis=1, keepdims=True)
    return np.divide(h, norms, out=np.zeros_like(h), where=norms > 0)


def cosine_similarity_matrix(h_alpha, h_beta) -> np.ndarray:
    """``B[i, j] = cos(h_alpha[i], h_beta[j])``; rows of zeros give similarity 0."""
    a, b = _as_2d(h_alpha), _as_2d(h_beta)
    if a.shape != b.shape:
        raise ad.ShapeMismatch(f"cosine similarity of {a.shape} and {b.shape}")
    return _unit_rows(a) @ _unit_rows(b).T


def cross_domain(domains) -> np.ndarray:
    d = np.asarray(domains)
    return d[:, None] != d[None, :]


def zero_same_domain(b: np.ndarray, domains) -> np.ndarray:
    b = np.asarray(b, dtype=np.float64)
    return np.where(cross_domain(domains), b, 0.0)


def count_cross_domain(domains) -> int:
    d = np.asarray(domains)
    _, counts = np.unique(d, return_counts=True)
    n = len(d)
    return int(n * n - (counts * counts).sum())


def promoted_count(ratio: float, num_cross: int) -> int:
    """``ceil(ratio * C)`` clamped to ``C``.

    A tiny slack absorbs binary rounding so that e.g. ``0.01 * 43200`` gives
    432 rather than 433.
    """
    return min(num_cross, max(0, math.ceil(ratio * num_cross - 1e-9)))


def select_top_r(b: np.ndarray, domains, r: int, epoch: int = -1) -> SimilarityMask:
    """The ``r`` largest cross-domain entries of ``b``.

    Only cross-domain positions are candidates, whatever their value. Ties go
    to the lexicographically smaller ``(i, j)``.
    """
    if r < 0:
        raise ValueError("r must be >= 0")
    ii, jj = np.nonzero(cross_domain(domains))
    r = min(r, len(ii))
    if r == 0:
        return SimilarityMask.empty(epoch)
    vals = np.asarray(b)[ii, jj]
    # np.nonzero is row-major, so a stable sort on -value keeps (i, j) order among ties
    order = np.argsort(-vals, kind="stable")[:r]
    pairs = np.stack([ii[order], jj[order]], axis=1).astype(np.int64)
    return SimilarityMask(pairs, epoch, r)


def nap_mask(h_alpha, h_beta, domains, ratio: float, epoch: int = -1) -> tuple[SimilarityMask, np.ndarray]:
    """Between-view similarity, same-domain zeroing and top-``ceil(ratio * C)`` selection."""
    b = zero_same_domain(cosine_similarity_matrix(h_alpha, h_beta), domains)
    r = promoted_count(ratio, count_cross_domain(domains))
    return select_top_r(b, domains, r, epoch), b


def _anchor_loss(e_inter: Tensor, e_intra: Tensor, eye: np.ndarray, off_diag: np.ndarray,
                 promoted: np.ndarray | None, keep_inter: np.ndarray | None,
                 keep_intra: np.ndarray | None) -> Tensor:
    """Per-anchor ``-log(num / den)`` as an (N, 1) tensor."""
    pos = ad.sum(e_inter * eye, axis=1)
    inter = e_inter if keep_inter is None else e_inter * keep_inter
    intra_mask = off_diag if keep_intra is None else off_diag * keep_intra
    den = ad.sum(inter, axis=1) + ad.sum(e_intra * intra_mask, axis=1)
    num = pos
    if promoted is not None:
        num = num + ad.sum((e_inter + e_intra) * promoted, axis=1)
    return ad.log(den) - ad.log(num)


def _similarities(h_alpha, h_beta, tau: float):
    za, zb = ad.row_l2_normalize(h_alpha), ad.row_l2_normalize(h_beta)
    inv_tau = 1.0 / tau
    e_ab = ad.exp((za @ zb.T) * inv_tau)
    e_aa = ad.exp((za @ za.T) * inv_tau)
    e_bb = ad.exp((zb @ zb.T) * inv_tau)
    return e_ab, e_aa, e_bb


def contrastive_loss(h_alpha, h_beta, mask: SimilarityMask | None, cfg: LossConfig,
                     domains=None) -> Tensor:
    """Symmetrized InfoNCE with promoted cross-domain positives.

    For an anchor ``i`` in view alpha the numerator is the positive term plus
    the inter- and intra-view terms of every promoted ``(i, j)``; the
    denominator is the usual InfoNCE denominator. Anchors in view beta use the
    transposed mask. With an empty mask this is plain InfoNCE.
    """
    h_alpha, h_beta = ad.as_tensor(h_alpha), ad.as_tensor(h_beta)
    if h_alpha.shape != h_beta.shape:
        raise ad.ShapeMismatch(f"views have shapes {h_alpha.shape} and {h_beta.shape}")
    n = h_alpha.shape[0]
    if mask is not None and len(mask) and domains is not None:
        d = np.asarray(domains)
        if np.any(d[mask.pairs[:, 0]] == d[mask.pairs[:, 1]]):
            raise ValueError("mask contains a same-domain pair")
    eye = np.eye(n)
    off_diag = 1.0 - eye
    promoted = mask.dense(n) if mask is not None and len(mask) else None
    e_ab, e_aa, e_bb = _similarities(h_alpha, h_beta, cfg.tau)
    loss_a = _anchor_loss(e_ab, e_aa, eye, off_diag, promoted, None, None)
    loss_b = _anchor_loss(e_ab.T, e_bb, eye, off_diag,
                          None if promoted is None else promoted.T, None, None)
    return (ad.mean(loss_a) + ad.mean(loss_b)) * 0.5


def warmup_loss(h_alpha, h_beta, cfg: LossConfig) -> Tensor:
    return contrastive_loss(h_alpha, h_beta, None, cfg)


@dataclass(frozen=True, eq=False)
class RemovalDraw:
    """Keep-indicators for the four negative-term families of the symmetrized loss."""

    inter_alpha: np.ndarray
    intra_alpha: np.ndarray
    inter_beta: np.ndarray
    intra_beta: np.ndarray


def draw_removal(domains, q: float, seed) -> RemovalDraw:
    """Delete each cross-domain negative term independently with probability ``q``."""
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"removal ratio must lie in [0, 1], got {q}")
    rng = np.random.default_rng(seed)
    cd = cross_domain(domains)
    n = len(cd)
    keeps = [np.where(cd, rng.random((n, n)) >= q, True).astype(np.float64) for _ in range(4)]
    return RemovalDraw(*keeps)


def cdp_removal_loss(h_alpha, h_beta, q: float, seed, cfg: LossConfig, domains,
                     draw: RemovalDraw | None = None) -> Tensor:
    """InfoNCE with a random subset of cross-domain negatives dropped from each denominator.

    ``q == 0`` returns exactly :func:`warmup_loss`. Pass ``draw`` to reuse a
    realized removal set; otherwise one is drawn from ``seed``.
    """
    if q == 0 and draw is None:
        return warmup_loss(h_alpha, h_beta, cfg)
    if draw is None:
        draw = draw_removal(domains, q, seed)
    h_alpha, h_beta = ad.as_tensor(h_alpha), ad.as_tensor(h_beta)
    n = h_alpha.shape[0]
    eye = np.eye(n)
    off_diag = 1.0 - eye
    e_ab, e_aa, e_bb = _similarities(h_alpha, h_beta, cfg.tau)
    loss_a = _anchor_loss(e_ab, e_aa, eye, off_diag, None, draw.inter_alpha, draw.intra_alpha)
    loss_b = _anchor_loss(e_ab.T, e_bb, eye, off_diag, None, draw.inter_beta, draw.intra_beta)
    return (ad.mean(loss_a) + ad.mean(loss_b)) * 0.5
