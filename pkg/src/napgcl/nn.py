"""GCN encoder, Adam optimizer and checkpoint serialization."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from . import autodiff as ad
from .augment import GraphView
from .autodiff import Tensor


class MissingGrad(RuntimeError):
    pass


@dataclass(frozen=True)
class EncoderConfig:
    embed_dim: int = 32
    hidden_dim: int | None = None  # None -> 2 * embed_dim
    num_layers: int = 2
    projection_head: bool = False

    def __post_init__(self):
        if self.num_layers < 1:
            raise ValueError("num_layers must be >= 1")
        if self.embed_dim < 1 or (self.hidden_dim is not None and self.hidden_dim < 1):
            raise ValueError("layer widths must be positive")

    def widths(self, in_dim: int) -> list[int]:
        hidden = self.hidden_dim if self.hidden_dim is not None else 2 * self.embed_dim
        return [in_dim] + [hidden] * (self.num_layers - 1) + [self.embed_dim]


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


@dataclass(eq=False)
class EncoderParams:
    """Weights of an ``L``-layer GCN plus the optional two-layer projection head."""

    weights: list[Tensor]
    projection: list[Tensor] = field(default_factory=list)

    @classmethod
    def init(cls, in_dim: int, cfg: EncoderConfig, seed) -> EncoderParams:
        rng = np.random.default_rng(seed)
        widths = cfg.widths(in_dim)
        weights = [Tensor(glorot(rng, a, b), requires_grad=True)
                   for a, b in zip(widths[:-1], widths[1:])]
        projection = []
        if cfg.projection_head:
            d = cfg.embed_dim
            projection = [Tensor(glorot(rng, d, d), requires_grad=True) for _ in range(2)]
        return cls(weights, projection)

    @property
    def tensors(self) -> list[Tensor]:
        return self.weights + self.projection

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[0]

    def zero_grad(self) -> None:
        for t in self.tensors:
            t.zero_grad()

    def copy(self) -> EncoderParams:
        return EncoderParams([Tensor(w.value.copy(), True) for w in self.weights],
                             [Tensor(w.value.copy(), True) for w in self.projection])


def gcn_propagate(adj: sp.csr_array, x, params: EncoderParams) -> Tensor:
    h = ad.as_tensor(x)
    if h.shape[1] != params.in_dim:
        raise ad.ShapeMismatch(f"features have width {h.shape[1]}, encoder expects {params.in_dim}")
    last = len(params.weights) - 1
    for layer, w in enumerate(params.weights):
        h = ad.spmm(adj, h @ w)
        if layer < last:
            h = ad.relu(h)
    return h


def gcn_forward(view: GraphView, params: EncoderParams) -> Tensor:
    """Node embeddings of ``view``: ReLU between layers, linear output layer."""
    return gcn_propagate(view.adjacency, view.graph.features, params)


def project(h: Tensor, params: EncoderParams) -> Tensor:
    if not params.projection:
        return h
    w1, w2 = params.projection
    return ad.relu(h @ w1) @ w2


@dataclass(frozen=True)
class AdamConfig:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("Adam betas must lie in [0, 1)")


@dataclass(eq=False)
class OptimizerState:
    config: AdamConfig
    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0

    @classmethod
    def init(cls, params: EncoderParams, config: AdamConfig) -> OptimizerState:
        return cls(config, [np.zeros_like(t.value) for t in params.tensors],
                   [np.zeros_like(t.value) for t in params.tensors])

    def copy(self) -> OptimizerState:
        return OptimizerState(self.config, [m.copy() for m in self.m], [v.copy() for v in self.v],
                              self.step)


def optimizer_step(params: EncoderParams, state: OptimizerState) -> None:
    """One bias-corrected Adam update in place, then clear the gradients."""
    tensors = params.tensors
    missing = [i for i, t in enumerate(tensors) if t.grad is None]
    if missing:
        raise MissingGrad(f"no gradient for parameter(s) {missing}")
    c = state.config
    state.step += 1
    bc1 = 1.0 - c.beta1 ** state.step
    bc2 = 1.0 - c.beta2 ** state.step
    for t, m, v in zip(tensors, state.m, state.v):
        g = t.grad
        m *= c.beta1
        m += (1.0 - c.beta1) * g
        v *= c.beta2
        v += (1.0 - c.beta2) * (g * g)
        t.value -= c.lr * (m / bc1) / (np.sqrt(v / bc2) + c.eps)
        t.grad = None


# ----------------------------------------------------------------------------
# checkpoints
#
# A checkpoint is a numpy ``.npz`` archive with keys
#   weight_<l>, proj_<k>          parameter matrices (float64)
#   adam_m_<i>, adam_v_<i>        Adam moments, one per parameter in the order
#                                 weights then projection
#   adam_step, epoch              int64 scalars
#   config_json                   canonical JSON of the training config
#   config_hash                   sha256 hex digest of config_json
#   mask                          (r, 2) int64 promoted pairs in effect
#   val_acc                       float64 scalar (nan when unknown)

def config_hash(config_json: str) -> str:
    return hashlib.sha256(config_json.encode()).hexdigest()


@dataclass(eq=False)
class Checkpoint:
    params: EncoderParams
    optimizer: OptimizerState
    epoch: int
    config_json: str
    mask: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=np.int64))
    val_acc: float = float("nan")

    @property
    def config(self) -> dict:
        return json.loads(self.config_json)

    @classmethod
    def capture(cls, params: EncoderParams, optimizer: OptimizerState, epoch: int,
                config_json: str, mask=None, val_acc: float = float("nan")) -> Checkpoint:
        """Deep-copy live training state."""
        opt = optimizer.copy()
        mask = np.zeros((0, 2), dtype=np.int64) if mask is None else np.array(mask, dtype=np.int64)
        return cls(params.copy(), opt, epoch, config_json, mask.reshape(-1, 2), val_acc)

    def save(self, path: str | Path) -> None:
        arrays: dict[str, np.ndarray] = {}
        for i, w in enumerate(self.params.weights):
            arrays[f"weight_{i}"] = w.value
        for i, w in enumerate(self.params.projection):
            arrays[f"proj_{i}"] = w.value
        for i, (m, v) in enumerate(zip(self.optimizer.m, self.optimizer.v)):
            arrays[f"adam_m_{i}"] = m
            arrays[f"adam_v_{i}"] = v
        c = self.optimizer.config
        arrays["adam_hparams"] = np.array([c.lr, c.beta1, c.beta2, c.eps])
        arrays["adam_step"] = np.array(self.optimizer.step, dtype=np.int64)
        arrays["epoch"] = np.array(self.epoch, dtype=np.int64)
        arrays["config_json"] = np.array(self.config_json)
        arrays["config_hash"] = np.array(config_hash(self.config_json))
        arrays["mask"] = self.mask
        arrays["val_acc"] = np.array(self.val_acc)
        with open(path, "wb") as fh:
            np.savez(fh, **arrays)

    @classmethod
    def load(cls, path: str | Path) -> Checkpoint:
        with np.load(path, allow_pickle=False) as z:
            config_json = str(z["config_json"])
            if str(z["config_hash"]) != config_hash(config_json):
                raise ValueError(f"{path}: config hash does not match stored config")
            weights = [Tensor(z[f"weight_{i}"], True) for i in range(_count(z, "weight_"))]
            projection = [Tensor(z[f"proj_{i}"], True) for i in range(_count(z, "proj_"))]
            n = len(weights) + len(projection)
            lr, b1, b2, eps = z["adam_hparams"].tolist()
            opt = OptimizerState(AdamConfig(lr, b1, b2, eps),
                                 [z[f"adam_m_{i}"].copy() for i in range(n)],
                                 [z[f"adam_v_{i}"].copy() for i in range(n)],
                                 int(z["adam_step"]))
            return cls(EncoderParams(weights, projection), opt, int(z["epoch"]), config_json,
                       z["mask"].astype(np.int64).reshape(-1, 2), float(z["val_acc"]))


def _count(z, prefix: str) -> int:
    return len([k for k in z.files if k.startswith(prefix)])
