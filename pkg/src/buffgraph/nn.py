"""Fixed-architecture GCN with hand-written backward passes.

The network is ``num_hidden`` graph convolutions with ReLU and dropout,
followed by a linear graph convolution producing logits::

    H1 = drop(relu(P X  W0))
    H2 = drop(relu(P H1 W1))
    ...
    logits = P H_k W_k

``P`` is a symmetric, self-looped, degree-normalised operator. Layers are
evaluated as ``P @ (H @ W)``; because ``P`` is symmetric, the backward pass
reuses the same sparse product on the upstream gradient.

Dropout masks are drawn from a generator keyed on ``(seed, step, layer)``
and filled row-major, so the first ``n`` rows of a mask do not depend on
how many rows follow. Training on a graph with extra appended nodes
therefore sees the same masks on the original rows.
"""
from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from buffgraph import kernels

logger = logging.getLogger(__name__)

# --------------------------------------------------------------------------
# sparse propagation operator


@dataclass
class SparseOperator:
    """Square CSR matrix applied through :mod:`buffgraph.kernels`."""

    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray

    @property
    def n(self) -> int:
        return len(self.indptr) - 1

    @property
    def nnz(self) -> int:
        return len(self.indices)

    def __matmul__(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[0] != self.n:
            raise ValueError(f"operator is {self.n}x{self.n} but input has {x.shape[0]} rows")
        return kernels.spmm(self.indptr, self.indices, self.data, x, self.n)

    def to_scipy(self) -> sp.csr_matrix:
        return sp.csr_matrix((self.data, self.indices, self.indptr), shape=(self.n, self.n))

    def to_dense(self) -> np.ndarray:
        return self.to_scipy().toarray()


def with_self_loops(indptr, indices, weights):
    """Insert unit diagonal entries into a loop-free CSR matrix.

    Returns ``(indptr, indices, weights, origin)`` where ``origin[k]`` is the
    position of entry ``k`` in the input, or -1 for an inserted diagonal.
    """
    indptr = np.asarray(indptr, dtype=np.int64)
    indices = np.asarray(indices, dtype=np.int64)
    n = len(indptr) - 1
    rows = np.concatenate([np.repeat(np.arange(n, dtype=np.int64), np.diff(indptr)),
                           np.arange(n, dtype=np.int64)])
    cols = np.concatenate([indices, np.arange(n, dtype=np.int64)])
    origin = np.concatenate([np.arange(len(indices), dtype=np.int64), np.full(n, -1, np.int64)])
    order = np.lexsort((cols, rows))
    new_indptr = indptr + np.arange(n + 1, dtype=np.int64)
    w = np.concatenate([np.asarray(weights, dtype=np.float64), np.ones(n)])
    return new_indptr, cols[order], w[order], origin[order]


def sym_normalize(indptr, indices, weights) -> SparseOperator:
    """``D^-1/2 A D^-1/2`` with ``D`` the row sums of ``A`` (self-loops included)."""
    indptr = np.asarray(indptr, dtype=np.int64)
    n = len(indptr) - 1
    rows = np.repeat(np.arange(n, dtype=np.int64), np.diff(indptr))
    weights = np.asarray(weights, dtype=np.float64)
    deg = np.bincount(rows, weights=weights, minlength=n)
    indices = np.asarray(indices, dtype=np.int64)
    scale = np.sqrt(deg[rows] * deg[indices])
    data = np.divide(weights, scale, out=np.zeros_like(weights), where=scale > 0)
    return SparseOperator(indptr, indices, data)


def gcn_operator(graph) -> SparseOperator:
    """Plain GCN propagation matrix of an unweighted graph."""
    indptr, indices, w, _ = with_self_loops(graph.indptr, graph.indices, np.ones(len(graph.indices)))
    return sym_normalize(indptr, indices, w)


# --------------------------------------------------------------------------
# model state


@dataclass
class ModelState:
    weights: list[np.ndarray]
    dropout: float = 0.0
    seed: int = 0
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")
        for a, b in zip(self.weights[:-1], self.weights[1:]):
            if a.shape[1] != b.shape[0]:
                raise ValueError(f"weight shapes do not chain: {a.shape} then {b.shape}")
        if not self.m:
            self.m = [np.zeros_like(w) for w in self.weights]
        if not self.v:
            self.v = [np.zeros_like(w) for w in self.weights]

    @property
    def shapes(self) -> list[tuple[int, int]]:
        return [w.shape for w in self.weights]

    def copy(self) -> "ModelState":
        return ModelState(
            [w.copy() for w in self.weights], self.dropout, self.seed, self.step,
            [a.copy() for a in self.m], [a.copy() for a in self.v],
        )


def init_model(in_dim: int, hidden: int, num_classes: int, num_hidden: int = 3,
               dropout: float = 0.4, seed: int = 0) -> ModelState:
    """Glorot-uniform weights ``in_dim -> hidden x num_hidden -> num_classes``."""
    rng = np.random.default_rng(seed)
    dims = [in_dim] + [hidden] * num_hidden + [num_classes]
    weights = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
    return ModelState(weights, dropout=dropout, seed=seed)


# --------------------------------------------------------------------------
# forward / backward


@dataclass
class ForwardTrace:
    inputs: list[np.ndarray]       # input to each layer (after dropout)
    pre: list[np.ndarray]          # P @ inputs[l] @ W_l
    masks: list[np.ndarray | None]  # scaled dropout masks of hidden layers
    embeddings: np.ndarray         # last hidden activation before dropout
    logits: np.ndarray


def dropout_mask(seed: int, step: int, layer: int, shape, rate: float) -> np.ndarray:
    rng = np.random.default_rng((seed, step, layer))
    keep = rng.random(shape) >= rate
    return keep / (1.0 - rate)


def gcn_forward(op: SparseOperator, x, model: ModelState, train_mode: bool = False,
                step: int | None = None) -> ForwardTrace:
    """Run the network; dropout is active only in ``train_mode``.

    ``step`` keys the dropout masks and defaults to the upcoming optimizer
    step ``model.step + 1``.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != op.n:
        raise ValueError(f"features of shape {x.shape} do not match a {op.n}-node operator")
    if x.shape[1] != model.weights[0].shape[0]:
        raise ValueError(f"feature width {x.shape[1]} != first layer input {model.weights[0].shape[0]}")
    if not np.all(np.isfinite(x)):
        raise ValueError("features contain non-finite values")
    step = model.step + 1 if step is None else step
    use_dropout = train_mode and model.dropout > 0
    h = x
    inputs, pre, masks = [], [], []
    embeddings = x
    last = len(model.weights) - 1
    for layer, w in enumerate(model.weights):
        inputs.append(h)
        z = op @ (h @ w)
        pre.append(z)
        if layer == last:
            break
        a = np.maximum(z, 0.0)
        embeddings = a
        if use_dropout:
            mask = dropout_mask(model.seed, step, layer, a.shape, model.dropout)
            h = a * mask
        else:
            mask = None
            h = a
        masks.append(mask)
    return ForwardTrace(inputs, pre, masks, embeddings, pre[-1])


def gcn_backward(op: SparseOperator, trace: ForwardTrace, model: ModelState,
                 grad_logits, grad_embeddings=None) -> list[np.ndarray]:
    """Parameter gradients given upstream gradients on logits and embeddings."""
    grads = [None] * len(model.weights)
    dz = np.asarray(grad_logits, dtype=np.float64)
    for layer in range(len(model.weights) - 1, -1, -1):
        g = op @ dz
        grads[layer] = trace.inputs[layer].T @ g
        if layer == 0:
            break
        dh = g @ model.weights[layer].T
        mask = trace.masks[layer - 1]
        da = dh * mask if mask is not None else dh
        if layer == len(model.weights) - 1 and grad_embeddings is not None:
            da = da + grad_embeddings
        dz = da * (trace.pre[layer - 1] > 0)
    return grads


# --------------------------------------------------------------------------
# losses


def log_softmax(logits) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def softmax(logits) -> np.ndarray:
    return np.exp(log_softmax(logits))


def softmax_cross_entropy(logits, labels, mask, class_weights=None, logit_adjust=None):
    """Weighted mean cross-entropy over ``mask`` and its gradient on ``logits``.

    ``class_weights`` scales each node's term by the weight of its label and
    normalises by the summed weights, so uniform weights give plain CE.
    ``logit_adjust`` (per class) is added to every row before the softmax;
    passing log class priors gives the balanced-softmax loss.
    """
    logits = np.asarray(logits, dtype=np.float64)
    mask = np.asarray(mask, dtype=np.int64)
    if mask.size == 0:
        raise ValueError("loss mask is empty")
    n_classes = logits.shape[1]
    y = np.asarray(labels, dtype=np.int64)[mask]
    if np.any((y < 0) | (y >= n_classes)):
        raise ValueError("masked nodes must carry labels in 0..C-1")
    if class_weights is None:
        w = np.ones(len(mask))
    else:
        class_weights = np.asarray(class_weights, dtype=np.float64)
        if class_weights.shape != (n_classes,):
            raise ValueError(f"class_weights must have length {n_classes}")
        w = class_weights[y]
    z = logits[mask]
    if logit_adjust is not None:
        z = z + np.asarray(logit_adjust, dtype=np.float64)
    logp = log_softmax(z)
    total = w.sum()
    loss = -(w * logp[np.arange(len(mask)), y]).sum() / total
    probs = np.exp(logp)
    probs[np.arange(len(mask)), y] -= 1.0
    grad = np.zeros_like(logits)
    grad[mask] = probs * (w / total)[:, None]
    return float(loss), grad


def hetero_loss(embeddings, src, dst, labels, margin: float = 1.0):
    """Contrastive edge loss on embedding distances.

    Same-label edges are pulled together (loss ``h``), different-label edges
    pushed apart up to ``margin`` (loss ``max(0, margin - h)``), with ``h``
    the mean absolute coordinate difference. Returns the mean over edges
    and its gradient on ``embeddings``.
    """
    embeddings = np.asarray(embeddings, dtype=np.float64)
    src = np.asarray(src, dtype=np.int64)
    dst = np.asarray(dst, dtype=np.int64)
    if len(src) == 0:
        logger.warning("hetero_loss: no eligible edges; loss is 0")
        return 0.0, np.zeros_like(embeddings)
    labels = np.asarray(labels)
    differ = labels[src] != labels[dst]
    h = kernels.edge_l1(embeddings, src, dst)
    hinge = np.maximum(0.0, margin - h)
    loss = np.where(differ, hinge, h).mean()
    # d/dh: +1 on same-label edges, -1 on active hinges, 0 at the kink
    coef = np.where(differ, -(margin - h > 0).astype(np.float64), 1.0) / len(src)
    return float(loss), kernels.edge_l1_backward(embeddings, src, dst, coef)


# --------------------------------------------------------------------------
# optimizer


def adam_step(model: ModelState, grads, lr: float = 0.01, betas=(0.9, 0.999),
              eps: float = 1e-8) -> ModelState:
    """Bias-corrected Adam update, in place; returns ``model``."""
    for i, g in enumerate(grads):
        if g.shape != model.weights[i].shape:
            raise ValueError(f"gradient {i} has shape {g.shape}, expected {model.weights[i].shape}")
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for layer {i}")
    b1, b2 = betas
    model.step += 1
    t = model.step
    for w, m, v, g in zip(model.weights, model.m, model.v, grads):
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        m_hat = m / (1 - b1 ** t)
        v_hat = v / (1 - b2 ** t)
        w -= lr * m_hat / (np.sqrt(v_hat) + eps)
    return model


# --------------------------------------------------------------------------
# checkpoints: b"BUFG", u32 version, u32 layers, i64 seed, (u32, u32) per
# layer, then little-endian float64 weights in row-major order

_MAGIC = b"BUFG"
_VERSION = 1


def save_checkpoint(model: ModelState, path) -> None:
    header = [_MAGIC, struct.pack("<IIq", _VERSION, len(model.weights), model.seed)]
    header += [struct.pack("<II", *w.shape) for w in model.weights]
    with open(path, "wb") as fh:
        fh.write(b"".join(header))
        for w in model.weights:
            fh.write(np.ascontiguousarray(w, dtype="<f8").tobytes())


def load_checkpoint(path) -> ModelState:
    raw = Path(path).read_bytes()
    if raw[:4] != _MAGIC:
        raise ValueError(f"{path}: not a model checkpoint")
    version, n_layers, seed = struct.unpack_from("<IIq", raw, 4)
    if version != _VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    offset = 4 + struct.calcsize("<IIq")
    shapes = []
    for _ in range(n_layers):
        shapes.append(struct.unpack_from("<II", raw, offset))
        offset += 8
    weights = []
    for rows, cols in shapes:
        size = rows * cols * 8
        if offset + size > len(raw):
            raise ValueError(f"{path}: truncated checkpoint")
        weights.append(np.frombuffer(raw, dtype="<f8", count=rows * cols, offset=offset)
                       .reshape(rows, cols).astype(np.float64))
        offset += size
    return ModelState(weights, dropout=0.0, seed=seed)
