"""Negative-as-Positive graph contrastive learning for out-of-distribution node classification."""

from .graph import Graph, make_graph, normalized_adjacency, validate_graph
from .objective import LossConfig, SimilarityMask, contrastive_loss
from .train import TrainConfig, train

__all__ = ["Graph", "LossConfig", "SimilarityMask", "TrainConfig", "contrastive_loss",
           "make_graph", "normalized_adjacency", "train", "validate_graph"]
