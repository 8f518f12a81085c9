"""Node, edge and class heterophily scores, and the edge-score to gate map.

Undefined scores (isolated or unlabeled nodes, classes with no scorable
node) are reported as ``nan``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from buffgraph import kernels
from buffgraph.graph import NO_LABEL, Graph


@dataclass
class HeterophilyScores:
    node_scores: np.ndarray
    edge_scores: np.ndarray
    class_scores: np.ndarray
    gates: np.ndarray


def node_score(graph: Graph, labels, v: int) -> float:
    """Fraction of ``v``'s labeled neighbors whose label differs from ``v``'s."""
    labels = np.asarray(labels)
    if labels[v] == NO_LABEL:
        return float("nan")
    nbr = labels[graph.neighbors(v)]
    nbr = nbr[nbr != NO_LABEL]
    if len(nbr) == 0:
        return float("nan")
    return 1.0 - np.count_nonzero(nbr == labels[v]) / len(nbr)


def node_scores(graph: Graph, labels=None) -> np.ndarray:
    labels = graph.labels if labels is None else np.asarray(labels, dtype=np.int64)
    rows = np.repeat(np.arange(graph.num_nodes), graph.degrees)
    nbr = labels[graph.indices]
    known = nbr != NO_LABEL
    same = known & (nbr == labels[rows])
    n_known = np.bincount(rows[known], minlength=graph.num_nodes)
    n_same = np.bincount(rows[same], minlength=graph.num_nodes)
    scores = np.full(graph.num_nodes, np.nan)
    ok = (n_known > 0) & (labels != NO_LABEL)
    scores[ok] = 1.0 - n_same[ok] / n_known[ok]
    return scores


def edge_score(z_u, z_v) -> float:
    """Mean absolute coordinate difference between two embeddings."""
    z_u = np.asarray(z_u, dtype=np.float64).ravel()
    z_v = np.asarray(z_v, dtype=np.float64).ravel()
    if z_u.shape != z_v.shape:
        raise ValueError(f"embedding dimensions differ: {z_u.shape[0]} vs {z_v.shape[0]}")
    if z_u.size == 0:
        raise ValueError("embeddings must have at least one dimension")
    return float(np.abs(z_u - z_v).sum() / z_u.size)


def edge_scores(embeddings, src, dst) -> np.ndarray:
    """Vectorised :func:`edge_score` over an edge list."""
    embeddings = np.asarray(embeddings, dtype=np.float64)
    if embeddings.ndim != 2 or embeddings.shape[1] == 0:
        raise ValueError("embeddings must be a non-empty 2-D array")
    return kernels.edge_l1(embeddings, src, dst)


def class_scores(graph: Graph, labels=None, scores=None) -> np.ndarray:
    """Mean node score per class over its scorable nodes."""
    labels = graph.labels if labels is None else np.asarray(labels, dtype=np.int64)
    scores = node_scores(graph, labels) if scores is None else np.asarray(scores)
    ok = ~np.isnan(scores) & (labels != NO_LABEL)
    totals = np.bincount(labels[ok], weights=scores[ok], minlength=graph.num_classes)
    counts = np.bincount(labels[ok], minlength=graph.num_classes)
    out = np.full(graph.num_classes, np.nan)
    out[counts > 0] = totals[counts > 0] / counts[counts > 0]
    return out


def gates_from_scores(scores) -> np.ndarray:
    """Min-max normalise edge scores into ``[0, 1]`` gates.

    All-equal scores give 0.5 everywhere.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size == 0:
        return scores.copy()
    lo, hi = scores.min(), scores.max()
    if hi == lo:
        return np.full_like(scores, 0.5)
    return np.clip((scores - lo) / (hi - lo), 0.0, 1.0)


def compute(graph: Graph, embeddings, labels=None) -> HeterophilyScores:
    """All four score families for ``graph`` given node embeddings."""
    beta = node_scores(graph, labels)
    src, dst = graph.edges()
    h = edge_scores(embeddings, src, dst) if len(src) else np.zeros(0)
    return HeterophilyScores(beta, h, class_scores(graph, labels, beta), gates_from_scores(h))
