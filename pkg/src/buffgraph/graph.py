"""Graph container, dataset-directory I/O and train/val/test splits.

A dataset directory holds three files:

``edges.tsv``
    two tab-separated, 0-based node ids per line (either orientation;
    duplicates and reversed copies are merged, self-loops dropped).
``features.csv``
    one comma-separated row of decimals per node, row order = node id.
``labels.csv``
    one integer per line; ``-1`` marks a node without a label.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

NO_LABEL = -1

EDGES_FILE = "edges.tsv"
FEATURES_FILE = "features.csv"
LABELS_FILE = "labels.csv"
MASKS_FILE = "masks.json"


class DatasetError(ValueError):
    """Base class for malformed dataset directories."""

    def __init__(self, path, line, message):
        self.path = Path(path)
        self.line = line
        where = f"{self.path}" if line is None else f"{self.path}:{line}"
        super().__init__(f"{where}: {message}")


class MissingFileError(DatasetError):
    pass


class NodeIdError(DatasetError):
    pass


class FeatureRowMismatchError(DatasetError):
    pass


class LabelRangeError(DatasetError):
    pass


class ClassAbsentError(ValueError):
    def __init__(self, cls):
        self.cls = cls
        super().__init__(f"class {cls} has no node in the mask")


@dataclass(eq=False)
class Graph:
    """Undirected graph in CSR form with node features and labels.

    Column indices are strictly increasing inside each row, the adjacency
    is symmetric and has no diagonal entries.
    """

    indptr: np.ndarray
    indices: np.ndarray
    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    self_loops_dropped: int = field(default=0, compare=False)

    def __post_init__(self):
        self.indptr = np.asarray(self.indptr, dtype=np.int64)
        self.indices = np.asarray(self.indices, dtype=np.int64)
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.validate()

    @property
    def num_nodes(self) -> int:
        return len(self.indptr) - 1

    @property
    def num_edges(self) -> int:
        """Number of undirected edges."""
        return len(self.indices) // 2

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    def neighbors(self, v: int) -> np.ndarray:
        return self.indices[self.indptr[v]:self.indptr[v + 1]]

    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        """Canonical undirected edge list ``(src, dst)`` with ``src < dst``.

        Edges are ordered by ``(src, dst)``; position in this list is the
        edge id used everywhere else.
        """
        rows = np.repeat(np.arange(self.num_nodes, dtype=np.int64), self.degrees)
        keep = rows < self.indices
        return rows[keep], self.indices[keep]

    def validate(self) -> None:
        n = self.num_nodes
        if self.indptr[0] != 0 or np.any(np.diff(self.indptr) < 0) or self.indptr[-1] != len(self.indices):
            raise ValueError("malformed CSR row offsets")
        if len(self.indices) and (self.indices.min() < 0 or self.indices.max() >= n):
            raise ValueError("CSR column index out of range")
        rows = np.repeat(np.arange(n, dtype=np.int64), self.degrees)
        if np.any(rows == self.indices):
            raise ValueError("self-loop present in adjacency")
        same_row = rows[1:] == rows[:-1]
        if np.any(self.indices[1:][same_row] <= self.indices[:-1][same_row]):
            raise ValueError("column indices must be strictly increasing within each row")
        order = np.lexsort((rows, self.indices))
        if not (np.array_equal(self.indices[order], rows) and np.array_equal(rows[order], self.indices)):
            raise ValueError("adjacency is not symmetric")
        if self.features.ndim != 2 or self.features.shape[0] != n:
            raise ValueError(f"features must have {n} rows, got shape {self.features.shape}")
        if self.labels.shape != (n,):
            raise ValueError(f"labels must have length {n}")
        bad = (self.labels != NO_LABEL) & ((self.labels < 0) | (self.labels >= self.num_classes))
        if np.any(bad):
            v = int(np.flatnonzero(bad)[0])
            raise ValueError(f"node {v} has label {self.labels[v]} outside 0..{self.num_classes - 1}")

    @classmethod
    def from_edges(cls, num_nodes, src, dst, features, labels, num_classes=None) -> "Graph":
        """Build a graph from an arbitrary edge list.

        Edges are symmetrised and deduplicated; self-loops are dropped and
        counted in ``self_loops_dropped``.
        """
        src = np.asarray(src, dtype=np.int64).ravel()
        dst = np.asarray(dst, dtype=np.int64).ravel()
        loops = src == dst
        n_loops = int(loops.sum())
        src, dst = src[~loops], dst[~loops]
        lo, hi = np.minimum(src, dst), np.maximum(src, dst)
        pairs = np.unique(np.stack([lo, hi], axis=1), axis=0) if len(lo) else np.zeros((0, 2), np.int64)
        rows = np.concatenate([pairs[:, 0], pairs[:, 1]])
        cols = np.concatenate([pairs[:, 1], pairs[:, 0]])
        order = np.lexsort((cols, rows))
        rows, cols = rows[order], cols[order]
        indptr = np.zeros(num_nodes + 1, dtype=np.int64)
        np.cumsum(np.bincount(rows, minlength=num_nodes), out=indptr[1:])
        labels = np.asarray(labels, dtype=np.int64)
        if num_classes is None:
            num_classes = int(labels.max()) + 1 if labels.size and labels.max() >= 0 else 0
        return cls(indptr, cols, features, labels, int(num_classes), self_loops_dropped=n_loops)

    def same_as(self, other: "Graph") -> bool:
        return (
            self.num_classes == other.num_classes
            and np.array_equal(self.indptr, other.indptr)
            and np.array_equal(self.indices, other.indices)
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.labels, other.labels)
        )

    def __eq__(self, other):
        if not isinstance(other, Graph):
            return NotImplemented
        return self.same_as(other)

    __hash__ = None


def _read_lines(path: Path) -> list[str]:
    if not path.is_file():
        raise MissingFileError(path, None, "file not found")
    return path.read_text().splitlines()


def _parse_int(token: str, path: Path, lineno: int, error=NodeIdError) -> int:
    try:
        return int(token)
    except ValueError:
        raise error(path, lineno, f"expected an integer, got {token!r}") from None


def load_graph(directory, num_classes: int | None = None) -> Graph:
    """Read and validate a dataset directory.

    Raises a :class:`DatasetError` subclass naming the file and line on
    the first problem found.
    """
    directory = Path(directory)
    feat_path = directory / FEATURES_FILE
    feat_lines = _read_lines(feat_path)
    rows = []
    for lineno, line in enumerate(feat_lines, start=1):
        if not line.strip():
            continue
        try:
            rows.append([float(tok) for tok in line.split(",")])
        except ValueError:
            raise FeatureRowMismatchError(feat_path, lineno, "non-numeric feature value") from None
        if len(rows[-1]) != len(rows[0]):
            raise FeatureRowMismatchError(
                feat_path, lineno, f"row has {len(rows[-1])} values, expected {len(rows[0])}"
            )
    features = np.array(rows, dtype=np.float64).reshape(len(rows), -1 if rows else 0)
    n = features.shape[0]

    label_path = directory / LABELS_FILE
    labels = []
    for lineno, line in enumerate(_read_lines(label_path), start=1):
        if not line.strip():
            continue
        value = _parse_int(line.strip(), label_path, lineno, error=LabelRangeError)
        if value < NO_LABEL or (num_classes is not None and value >= num_classes):
            raise LabelRangeError(label_path, lineno, f"label {value} out of range")
        labels.append(value)
    if len(labels) != n:
        raise FeatureRowMismatchError(
            feat_path, None, f"{n} feature rows but {len(labels)} labels in {label_path.name}"
        )

    edge_path = directory / EDGES_FILE
    src, dst = [], []
    for lineno, line in enumerate(_read_lines(edge_path), start=1):
        if not line.strip():
            continue
        parts = line.split("\t") if "\t" in line else line.split()
        if len(parts) != 2:
            raise NodeIdError(edge_path, lineno, "expected two node ids")
        u = _parse_int(parts[0].strip(), edge_path, lineno)
        v = _parse_int(parts[1].strip(), edge_path, lineno)
        for node in (u, v):
            if node < 0 or node >= n:
                raise NodeIdError(edge_path, lineno, f"node id {node} outside 0..{n - 1}")
        src.append(u)
        dst.append(v)

    graph = Graph.from_edges(n, src, dst, features, labels, num_classes)
    if graph.self_loops_dropped:
        logger.warning("%s: dropped %d self-loop(s)", edge_path, graph.self_loops_dropped)
    return graph


def write_graph(graph: Graph, directory) -> Path:
    """Write ``graph`` in the dataset-directory format (lossless)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    src, dst = graph.edges()
    with open(directory / EDGES_FILE, "w") as fh:
        for u, v in zip(src.tolist(), dst.tolist()):
            fh.write(f"{u}\t{v}\n")
    with open(directory / FEATURES_FILE, "w") as fh:
        for row in graph.features:
            fh.write(",".join(repr(float(x)) for x in row) + "\n")
    with open(directory / LABELS_FILE, "w") as fh:
        fh.writelines(f"{y}\n" for y in graph.labels.tolist())
    return directory


@dataclass(eq=False)
class Split:
    """Disjoint train/val/test node-id sets over original nodes."""

    train: np.ndarray
    val: np.ndarray
    test: np.ndarray

    def __post_init__(self):
        self.train = np.sort(np.asarray(self.train, dtype=np.int64))
        self.val = np.sort(np.asarray(self.val, dtype=np.int64))
        self.test = np.sort(np.asarray(self.test, dtype=np.int64))
        merged = np.concatenate([self.train, self.val, self.test])
        if len(np.unique(merged)) != len(merged):
            raise ValueError("split masks overlap")

    def mask(self, name: str) -> np.ndarray:
        if name not in ("train", "val", "test"):
            raise ValueError(f"unknown mask {name!r}")
        return getattr(self, name)

    def check_within(self, num_nodes: int) -> None:
        for name in ("train", "val", "test"):
            ids = self.mask(name)
            if len(ids) and (ids.min() < 0 or ids.max() >= num_nodes):
                raise ValueError(f"{name} mask references nodes outside 0..{num_nodes - 1}")

    def __eq__(self, other):
        if not isinstance(other, Split):
            return NotImplemented
        return all(np.array_equal(self.mask(k), other.mask(k)) for k in ("train", "val", "test"))

    __hash__ = None

    def to_json(self) -> dict:
        return {k: self.mask(k).tolist() for k in ("train", "val", "test")}

    @classmethod
    def from_json(cls, data: dict) -> "Split":
        return cls(data["train"], data["val"], data["test"])


def save_split(split: Split, path) -> None:
    Path(path).write_text(json.dumps(split.to_json()))


def load_split(path) -> Split:
    return Split.from_json(json.loads(Path(path).read_text()))


def class_counts(graph: Graph, mask) -> np.ndarray:
    labels = graph.labels[np.asarray(mask, dtype=np.int64)]
    labels = labels[labels != NO_LABEL]
    return np.bincount(labels, minlength=graph.num_classes)


def imbalance_ratio(graph: Graph, mask) -> float:
    """Largest over smallest class count among the masked nodes."""
    counts = class_counts(graph, mask)
    absent = np.flatnonzero(counts == 0)
    if len(absent):
        raise ClassAbsentError(int(absent[0]))
    return float(counts.max() / counts.min())


def split_random(graph: Graph, ratios=(0.6, 0.2, 0.2), seed: int = 0) -> Split:
    """Stratified random split.

    Inside each class the nodes are shuffled, then ``floor(r * n)`` go to
    validation and test (at least one each) and the remainder to train.
    """
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must be three non-negative numbers summing to 1, got {ratios}")
    rng = np.random.default_rng(seed)
    parts = {"train": [], "val": [], "test": []}
    for c in range(graph.num_classes):
        members = np.flatnonzero(graph.labels == c)
        n = len(members)
        if n < 3:
            raise ValueError(f"class {c} has {n} node(s); need at least 3 to fill train/val/test")
        members = rng.permutation(members)
        n_val = max(1, math.floor(ratios[1] * n + 1e-9)) if ratios[1] > 0 else 0
        n_test = max(1, math.floor(ratios[2] * n + 1e-9)) if ratios[2] > 0 else 0
        parts["val"].append(members[:n_val])
        parts["test"].append(members[n_val:n_val + n_test])
        parts["train"].append(members[n_val + n_test:])
    return Split(*(np.concatenate(parts[k]) if parts[k] else np.zeros(0, np.int64)
                   for k in ("train", "val", "test")))


def make_imbalanced(split: Split, graph: Graph, rho: float, seed: int = 0) -> Split:
    """Downsample the second half of the classes in the train mask.

    Classes ``c >= ceil(C / 2)`` keep ``ceil(m_max / rho)`` training nodes,
    ``m_max`` being the largest training class. Validation and test are
    returned unchanged.
    """
    if rho < 1:
        raise ValueError(f"rho must be >= 1, got {rho}")
    counts = class_counts(graph, split.train)
    target = math.ceil(counts.max() / rho) if counts.size else 0
    if target < 1:
        logger.warning("downsample target %d < 1; clamped to 1", target)
        target = 1
    rng = np.random.default_rng(seed)
    train_labels = graph.labels[split.train]
    keep = [split.train[train_labels < math.ceil(graph.num_classes / 2)]]
    for c in range(math.ceil(graph.num_classes / 2), graph.num_classes):
        members = split.train[train_labels == c]
        if len(members) > target:
            members = rng.choice(members, size=target, replace=False)
        keep.append(members)
    return Split(np.concatenate(keep), split.val.copy(), split.test.copy())
