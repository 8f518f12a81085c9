"""Planted-partition graphs with Gaussian class-mean features.

Every unordered node pair is an edge independently with probability
``p_in`` (same class) or ``p_out`` (different classes). For classes of
equal size ``n`` out of ``N`` nodes, the expected node heterophily is
roughly::

    p_out * (N - n) / (p_in * (n - 1) + p_out * (N - n))

so ``p_in == p_out`` gives about ``(C - 1) / C`` and ``p_out == 0`` gives 0.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from buffgraph.graph import Graph, write_graph


@dataclass
class SynthConfig:
    class_sizes: list[int] = field(default_factory=lambda: [100, 100])
    p_in: float = 0.05
    p_out: float = 0.01
    feature_dim: int = 16
    class_mean_scale: float = 1.0
    feature_noise: float = 1.0
    seed: int = 0

    def __post_init__(self):
        self.class_sizes = [int(s) for s in self.class_sizes]
        if not self.class_sizes or any(s < 1 for s in self.class_sizes):
            raise ValueError(f"class sizes must all be >= 1, got {self.class_sizes}")
        for name in ("p_in", "p_out"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {p}")
        if self.feature_dim < 1:
            raise ValueError("feature_dim must be >= 1")
        if self.feature_noise < 0:
            raise ValueError("feature_noise must be >= 0")

    @property
    def num_nodes(self) -> int:
        return sum(self.class_sizes)

    def expected_heterophily(self) -> float:
        """Approximate mean node heterophily implied by the block probabilities."""
        n_total = self.num_nodes
        scores, weights = [], []
        for n in self.class_sizes:
            same = self.p_in * (n - 1)
            other = self.p_out * (n_total - n)
            if same + other > 0:
                scores.append(other / (same + other))
                weights.append(n)
        return float(np.average(scores, weights=weights)) if scores else float("nan")

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=2))


def _decode_triangle(k: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # pairs (i, j), i < j, enumerated by j then i: k = j (j - 1) / 2 + i
    j = np.floor((1.0 + np.sqrt(1.0 + 8.0 * k.astype(np.float64))) / 2.0).astype(np.int64)
    j[j * (j - 1) // 2 > k] -= 1
    j[(j + 1) * j // 2 <= k] += 1
    i = k - j * (j - 1) // 2
    return i, j


def _sample_pairs(rng, n_pairs: int, p: float) -> np.ndarray:
    if p <= 0.0 or n_pairs == 0:
        return np.zeros(0, dtype=np.int64)
    if p >= 1.0:
        return np.arange(n_pairs, dtype=np.int64)
    count = rng.binomial(n_pairs, p)
    return np.sort(rng.choice(n_pairs, size=count, replace=False)).astype(np.int64)


def generate(config: SynthConfig) -> Graph:
    """Sample a graph from ``config``; identical configs give identical graphs."""
    rng = np.random.default_rng(config.seed)
    sizes = config.class_sizes
    offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
    src_parts, dst_parts = [], []
    for a, n_a in enumerate(sizes):
        for b in range(a, len(sizes)):
            n_b = sizes[b]
            if a == b:
                picks = _sample_pairs(rng, n_a * (n_a - 1) // 2, config.p_in)
                i, j = _decode_triangle(picks)
            else:
                picks = _sample_pairs(rng, n_a * n_b, config.p_out)
                i, j = picks // n_b, picks % n_b
            src_parts.append(i + offsets[a])
            dst_parts.append(j + offsets[b])
    src = np.concatenate(src_parts)
    dst = np.concatenate(dst_parts)

    labels = np.repeat(np.arange(len(sizes), dtype=np.int64), sizes)
    means = np.zeros((len(sizes), config.feature_dim))
    means[np.arange(len(sizes)), np.arange(len(sizes)) % config.feature_dim] = config.class_mean_scale
    noise = rng.standard_normal((config.num_nodes, config.feature_dim))
    features = means[labels] + config.feature_noise * noise
    return Graph.from_edges(config.num_nodes, src, dst, features, labels, num_classes=len(sizes))


def write_dataset(config: SynthConfig, directory) -> Graph:
    """Generate a graph and write it plus ``config.json`` to ``directory``."""
    graph = generate(config)
    write_graph(graph, directory)
    config.save(Path(directory) / "config.json")
    return graph
