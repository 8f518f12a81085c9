"""Buffer-node augmentation and gate-weighted dual-path adjacency.

Each undirected edge ``e = (u, v)`` (``u < v``, canonical edge order) gets
a buffer node ``N + e`` whose features mix the endpoints::

    X[N + e] = alpha * X[u] + (1 - alpha) * X[v]

The augmented graph keeps the original edge as a residual link and adds
the two links ``u - (N+e)`` and ``(N+e) - v``. A gate ``g_e`` in ``[0, 1]``
splits the edge's unit mass: the residual link gets ``1 - g_e``, each
buffer link gets ``g_e``. ``g = 0`` everywhere is the plain GCN on the
base graph (buffers become isolated), ``g = 1`` routes everything through
buffers.

Undirected link ids: residual link of edge ``e`` is ``e``; its buffer links
are ``E + 2e`` (``u`` side) and ``E + 2e + 1`` (``v`` side).
"""
from __future__ import annotations

import numpy as np

from buffgraph.graph import NO_LABEL, Graph
from buffgraph.nn import SparseOperator, sym_normalize, with_self_loops


class AugmentedGraph:
    def __init__(self, base: Graph, alpha: float = 0.5):
        if not 0.0 <= alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
        self.base = base
        self.alpha = float(alpha)
        n = base.num_nodes
        src, dst = base.edges()
        n_edges = len(src)
        self.src, self.dst = src, dst
        buf = n + np.arange(n_edges, dtype=np.int64)

        x = base.features
        self.features = np.concatenate([x, self.alpha * x[src] + (1.0 - self.alpha) * x[dst]])
        self.labels = np.concatenate([base.labels, np.full(n_edges, NO_LABEL, dtype=np.int64)])

        # undirected links in id order: residual, then (u, buf), (buf, v) per edge
        link_a = np.concatenate([src, np.stack([src, buf], 1).ravel()])
        link_b = np.concatenate([dst, np.stack([buf, dst], 1).ravel()])
        link_edge = np.concatenate([np.arange(n_edges), np.repeat(np.arange(n_edges), 2)])
        link_is_buffer = np.concatenate([np.zeros(n_edges, bool), np.ones(2 * n_edges, bool)])

        rows = np.concatenate([link_a, link_b])
        cols = np.concatenate([link_b, link_a])
        order = np.lexsort((cols, rows))
        total = n + n_edges
        self.indptr = np.zeros(total + 1, dtype=np.int64)
        np.cumsum(np.bincount(rows, minlength=total), out=self.indptr[1:])
        self.indices = cols[order]
        n_links = len(link_a)
        self._entry_link = np.concatenate([np.arange(n_links), np.arange(n_links)])[order]
        self._link_edge = link_edge
        self._link_is_buffer = link_is_buffer
        self.gates = np.full(n_edges, 0.5)
        self.weights = np.empty(len(self.indices))
        self._loop_indptr, self._loop_indices, _, self._loop_origin = with_self_loops(
            self.indptr, self.indices, np.zeros(len(self.indices))
        )
        self.set_gates(self.gates)

    @property
    def num_nodes(self) -> int:
        return self.base.num_nodes + self.buffer_count

    @property
    def buffer_count(self) -> int:
        return len(self.src)

    def link_weights(self) -> np.ndarray:
        """Weight of every undirected link, indexed by link id."""
        g = self.gates[self._link_edge]
        return np.where(self._link_is_buffer, g, 1.0 - g)

    def set_gates(self, gates) -> "AugmentedGraph":
        """Replace all gates and refresh link weights; returns ``self``."""
        gates = np.asarray(gates, dtype=np.float64)
        if gates.shape != (self.buffer_count,):
            raise ValueError(f"expected {self.buffer_count} gates, got shape {gates.shape}")
        if np.any(~np.isfinite(gates)) or np.any((gates < 0) | (gates > 1)):
            raise ValueError("gates must lie in [0, 1]")
        self.gates = gates.copy()
        self.weights = self.link_weights()[self._entry_link]
        return self

    def edge_map(self) -> list[dict]:
        n, n_edges = self.base.num_nodes, self.buffer_count
        return [
            {
                "edge": e,
                "src": int(self.src[e]),
                "tar": int(self.dst[e]),
                "buffer_node": n + e,
                "residual_link": e,
                "buffer_links": [n_edges + 2 * e, n_edges + 2 * e + 1],
            }
            for e in range(n_edges)
        ]

    def links(self) -> tuple[np.ndarray, np.ndarray]:
        """Endpoints of every undirected link, indexed by link id."""
        n, e = self.base.num_nodes, self.buffer_count
        buf = n + np.arange(e, dtype=np.int64)
        a = np.concatenate([self.src, np.stack([self.src, buf], 1).ravel()])
        b = np.concatenate([self.dst, np.stack([buf, self.dst], 1).ravel()])
        return a, b

    def as_graph(self) -> Graph:
        """The augmented topology as an unweighted :class:`Graph`."""
        return Graph(self.indptr.copy(), self.indices.copy(), self.features.copy(),
                     self.labels.copy(), self.base.num_classes)

    def dense_adjacency(self, self_loops: bool = False) -> np.ndarray:
        rows = np.repeat(np.arange(self.num_nodes), np.diff(self.indptr))
        a = np.zeros((self.num_nodes, self.num_nodes))
        a[rows, self.indices] = self.weights
        if self_loops:
            a[np.diag_indices_from(a)] += 1.0
        return a


def augment(graph: Graph, alpha: float = 0.5) -> AugmentedGraph:
    """Insert one buffer node per edge; all gates start at 0.5."""
    return AugmentedGraph(graph, alpha)


def set_gates(aug: AugmentedGraph, gates) -> AugmentedGraph:
    return aug.set_gates(gates)


def normalized_propagation_matrix(aug: AugmentedGraph) -> SparseOperator:
    """``D^-1/2 (A' + I) D^-1/2`` for the gate-weighted augmented adjacency."""
    origin = aug._loop_origin
    w = np.ones(len(origin))
    w[origin >= 0] = aug.weights[origin[origin >= 0]]
    return sym_normalize(aug._loop_indptr, aug._loop_indices, w)
