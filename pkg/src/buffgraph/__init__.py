"""Buffer-node augmented GCN training for class-imbalanced node classification."""
from buffgraph.buffer import AugmentedGraph, augment, normalized_propagation_matrix, set_gates
from buffgraph.graph import (
    Graph,
    Split,
    imbalance_ratio,
    load_graph,
    make_imbalanced,
    split_random,
    write_graph,
)
from buffgraph.kernels import get_backend
from buffgraph.train import TrainConfig, evaluate, fit, pretrain, train_vanilla

__version__ = "0.1.0"

__all__ = [
    "AugmentedGraph",
    "Graph",
    "Split",
    "TrainConfig",
    "augment",
    "evaluate",
    "fit",
    "get_backend",
    "imbalance_ratio",
    "load_graph",
    "make_imbalanced",
    "normalized_propagation_matrix",
    "pretrain",
    "set_gates",
    "split_random",
    "train_vanilla",
    "write_graph",
]
