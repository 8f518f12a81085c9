"""Laplacian spectra of a graph before and after buffer insertion.

The two spectra have different lengths (``N`` and ``N + E``). Shifts are
reported by aligning both ascending-sorted lists on their first ``N``
positions; nothing is claimed about the sign of the shift.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from buffgraph.buffer import AugmentedGraph
from buffgraph.graph import Graph

MAX_DENSE_SIZE = 5000
ALIGNMENT = "ascending-sorted index, first N positions"


@dataclass
class SpectrumReport:
    base_eigenvalues: np.ndarray
    augmented_eigenvalues: np.ndarray
    delta: np.ndarray
    num_nodes: int
    num_edges: int

    def to_json(self) -> dict:
        return {
            "num_nodes": self.num_nodes,
            "num_edges": self.num_edges,
            "augmented_nodes": self.num_nodes + self.num_edges,
            "alignment": ALIGNMENT,
            "base_eigenvalues": self.base_eigenvalues.tolist(),
            "augmented_eigenvalues": self.augmented_eigenvalues.tolist(),
            "delta": self.delta.tolist(),
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2)


def laplacian(adjacency) -> np.ndarray:
    """``D - A`` for a symmetric, non-negative weight matrix."""
    a = np.asarray(adjacency, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"adjacency must be square, got {a.shape}")
    if not np.array_equal(a, a.T):
        raise ValueError("adjacency must be symmetric")
    if np.any(a < 0):
        raise ValueError("adjacency weights must be non-negative")
    return np.diag(a.sum(axis=1)) - a


def laplacian_spectrum(adjacency) -> np.ndarray:
    """Ascending eigenvalues of the graph Laplacian (dense solver)."""
    a = np.asarray(adjacency, dtype=np.float64)
    if a.shape[0] > MAX_DENSE_SIZE:
        raise ValueError(f"{a.shape[0]} nodes exceeds the dense limit of {MAX_DENSE_SIZE}")
    if a.shape[0] == 0:
        return np.zeros(0)
    return np.sort(scipy.linalg.eigvalsh(laplacian(a)))


def base_adjacency(graph: Graph) -> np.ndarray:
    a = np.zeros((graph.num_nodes, graph.num_nodes))
    rows = np.repeat(np.arange(graph.num_nodes), graph.degrees)
    a[rows, graph.indices] = 1.0
    return a


def eigenvalue_shift(graph: Graph, alpha: float = 0.5, gates=None) -> SpectrumReport:
    """Spectra of the base graph and its gate-weighted augmentation.

    ``gates`` defaults to 0.5 on every edge. Self-loops are not part of
    either Laplacian.
    """
    if graph.num_nodes + graph.num_edges > MAX_DENSE_SIZE:
        raise ValueError(
            f"augmented size {graph.num_nodes + graph.num_edges} exceeds the dense limit of {MAX_DENSE_SIZE}"
        )
    aug = AugmentedGraph(graph, alpha)
    if gates is not None:
        aug.set_gates(gates)
    base = laplacian_spectrum(base_adjacency(graph))
    augmented = laplacian_spectrum(aug.dense_adjacency())
    n = min(len(base), len(augmented))
    return SpectrumReport(base, augmented, augmented[:n] - base[:n], graph.num_nodes, graph.num_edges)
