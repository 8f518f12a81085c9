"""Two-stage training: vanilla GCN pre-training, then buffer-gated training.

Stage 1 trains a plain GCN on the original graph and scores every edge
by the distance between its endpoints' embeddings. Stage 2 continues the
same model (weights and Adam moments) on the augmented graph, with gates
set from those scores, minimising ``pred + lambda * hetero``; every
``recompute_interval`` epochs the edge scores and gates are recomputed
from the current embeddings. The model with the best validation balanced
accuracy is returned.
"""
from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from buffgraph import heterophily, metrics
from buffgraph.buffer import AugmentedGraph, augment, normalized_propagation_matrix
from buffgraph.graph import Graph, Split
from buffgraph.nn import (
    ModelState,
    adam_step,
    gcn_backward,
    gcn_forward,
    gcn_operator,
    hetero_loss,
    init_model,
    softmax_cross_entropy,
)

logger = logging.getLogger(__name__)

LOSS_MODES = ("plain", "reweight", "balanced")


@dataclass
class TrainConfig:
    alpha: float = 0.5
    lam: float = 1.0
    margin: float = 1.0
    lr: float = 0.01
    hidden: int = 256
    num_hidden: int = 3
    dropout: float = 0.4
    max_epochs: int = 2000
    patience: int = 500
    pretrain_epochs: int = 200
    recompute_interval: int = 50
    loss_mode: str = "plain"
    seed: int = 0
    # constant gate for every edge, disabling score-driven gates
    fixed_gate: float | None = None

    def __post_init__(self):
        if self.recompute_interval < 1:
            raise ValueError("recompute_interval must be >= 1")
        if self.patience > self.max_epochs:
            raise ValueError("patience must not exceed max_epochs")
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if self.loss_mode not in LOSS_MODES:
            raise ValueError(f"loss_mode must be one of {LOSS_MODES}, got {self.loss_mode!r}")
        if self.fixed_gate is not None and not 0.0 <= self.fixed_gate <= 1.0:
            raise ValueError("fixed_gate must lie in [0, 1]")
        if self.pretrain_epochs < 0 or self.max_epochs < 0:
            raise ValueError("epoch counts must be >= 0")

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]


@dataclass
class EpochRecord:
    epoch: int
    loss_pred: float
    loss_hetero: float
    loss_total: float
    val_acc: float
    val_bacc: float
    val_f1: float
    gates_refreshed: bool
    train_time: float
    eval_time: float


@dataclass
class TrainLog:
    records: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    best_val_bacc: float = float("-inf")

    def write_csv(self, path, include_times: bool = True) -> None:
        names = [f.name for f in fields(EpochRecord)]
        if not include_times:
            names = [n for n in names if not n.endswith("_time")]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(names)
            for rec in self.records:
                row = asdict(rec)
                writer.writerow([repr(row[n]) if isinstance(row[n], float) else row[n] for n in names])


def loss_adjustments(labels, train_mask, num_classes: int, loss_mode: str):
    """Class weights and logit offsets for the chosen loss mode."""
    counts = np.bincount(np.asarray(labels)[train_mask], minlength=num_classes).astype(np.float64)
    if loss_mode == "plain":
        return None, None
    if loss_mode == "reweight":
        return counts.sum() / (num_classes * np.maximum(counts, 1.0)), None
    if loss_mode == "balanced":
        return None, np.log(np.maximum(counts, 1.0) / counts.sum())
    raise ValueError(f"unknown loss mode {loss_mode!r}")


def _val_metrics(logits, graph: Graph, split: Split):
    preds = logits[:graph.num_nodes].argmax(axis=1)
    return metrics.compute(preds, graph.labels, split.val, graph.num_classes, mask_name="val")


def _check_inputs(graph: Graph, split: Split):
    split.check_within(graph.num_nodes)
    if len(split.train) == 0:
        raise ValueError("train mask is empty")
    if len(split.val) == 0:
        raise ValueError("validation mask is empty")


def _train_stage(op_for, features, graph: Graph, split: Split, model: ModelState,
                 config: TrainConfig, aug: AugmentedGraph | None = None, callback=None):
    """Shared epoch loop for the vanilla baseline and the buffered stage.

    ``op_for()`` returns the current propagation operator; it is re-read
    after every gate refresh.
    """
    n = graph.num_nodes
    labels = np.concatenate([graph.labels, np.full(features.shape[0] - n, -1)])
    weights, adjust = loss_adjustments(graph.labels, split.train, graph.num_classes, config.loss_mode)
    src, dst = graph.edges()
    in_train = np.zeros(n, bool)
    in_train[split.train] = True
    keep = in_train[src] & in_train[dst]
    h_src, h_dst = src[keep], dst[keep]
    use_hetero = aug is not None and config.lam > 0
    if use_hetero and not len(h_src):
        logger.warning("no train-train edges; heterophily loss is 0")
    refresh = aug is not None and config.fixed_gate is None

    log = TrainLog()
    best = model.copy()
    best_gates = aug.gates.copy() if aug is not None else None
    op = op_for()
    eval_trace = None
    for epoch in range(1, config.max_epochs + 1):
        t0 = time.perf_counter()
        refreshed = False
        if refresh and epoch % config.recompute_interval == 0:
            if eval_trace is None:
                eval_trace = gcn_forward(op, features, model, train_mode=False)
            scores = heterophily.edge_scores(eval_trace.embeddings[:n], src, dst)
            aug.set_gates(heterophily.gates_from_scores(scores))
            op = op_for()
            refreshed = True
        trace = gcn_forward(op, features, model, train_mode=True)
        loss_pred, grad_logits = softmax_cross_entropy(trace.logits, labels, split.train, weights, adjust)
        loss_het, grad_emb = 0.0, None
        if aug is not None and len(h_src):
            loss_het, grad_emb = hetero_loss(trace.embeddings, h_src, h_dst, graph.labels, config.margin)
            grad_emb = config.lam * grad_emb if use_hetero else None
        total = loss_pred + config.lam * loss_het if aug is not None else loss_pred
        if not math.isfinite(total):
            raise FloatingPointError(f"non-finite loss at epoch {epoch}")
        grads = gcn_backward(op, trace, model, grad_logits, grad_emb)
        adam_step(model, grads, lr=config.lr)
        t1 = time.perf_counter()
        eval_trace = gcn_forward(op, features, model, train_mode=False)
        val = _val_metrics(eval_trace.logits, graph, split)
        t2 = time.perf_counter()
        log.records.append(EpochRecord(epoch, loss_pred, loss_het, total, val.acc, val.bacc,
                                       val.macro_f1, refreshed, t1 - t0, t2 - t1))
        if callback is not None:
            callback(epoch, model, eval_trace)
        if val.bacc > log.best_val_bacc:
            log.best_val_bacc = val.bacc
            log.best_epoch = epoch
            best = model.copy()
            if aug is not None:
                best_gates = aug.gates.copy()
        elif epoch - log.best_epoch >= config.patience:
            break
    if aug is not None:
        aug.set_gates(best_gates)
    return best, log


def pretrain(graph: Graph, split: Split, config: TrainConfig):
    """Train a vanilla GCN with plain CE, then score every original edge.

    Returns the model and the per-edge scores (canonical edge order)
    computed from its dropout-free embeddings.
    """
    _check_inputs(graph, split)
    model = init_model(graph.features.shape[1], config.hidden, graph.num_classes,
                       config.num_hidden, config.dropout, config.seed)
    op = gcn_operator(graph)
    labels = graph.labels
    for _ in range(config.pretrain_epochs):
        trace = gcn_forward(op, graph.features, model, train_mode=True)
        loss, grad = softmax_cross_entropy(trace.logits, labels, split.train)
        if not math.isfinite(loss):
            raise FloatingPointError(f"non-finite loss at pre-training step {model.step + 1}")
        adam_step(model, gcn_backward(op, trace, model, grad), lr=config.lr)
    src, dst = graph.edges()
    if len(src) == 0:
        return model, np.zeros(0)
    emb = gcn_forward(op, graph.features, model, train_mode=False).embeddings
    return model, heterophily.edge_scores(emb, src, dst)


def fit(graph: Graph, split: Split, config: TrainConfig | None = None, callback=None):
    """Full two-stage training; returns ``(best_model, augmented_graph, log)``.

    The augmented graph carries the gates that were active when the best
    model was recorded. ``callback(epoch, model, eval_trace)`` is called
    after every main-stage epoch.
    """
    config = config or TrainConfig()
    model, scores = pretrain(graph, split, config)
    aug = augment(graph, config.alpha)
    if config.fixed_gate is not None:
        aug.set_gates(np.full(aug.buffer_count, config.fixed_gate))
    else:
        aug.set_gates(heterophily.gates_from_scores(scores))
    best, log = _train_stage(lambda: normalized_propagation_matrix(aug), aug.features, graph,
                             split, model, config, aug=aug, callback=callback)
    return best, aug, log


def train_vanilla(graph: Graph, split: Split, config: TrainConfig | None = None, callback=None):
    """Plain GCN baseline with the same loop, loss mode and model selection."""
    config = config or TrainConfig()
    _check_inputs(graph, split)
    model = init_model(graph.features.shape[1], config.hidden, graph.num_classes,
                       config.num_hidden, config.dropout, config.seed)
    op = gcn_operator(graph)
    return _train_stage(lambda: op, graph.features, graph, split, model, config, callback=callback)


def predict(model: ModelState, target) -> np.ndarray:
    """Dropout-free logits for the original nodes of a Graph or AugmentedGraph."""
    if isinstance(target, AugmentedGraph):
        op, x, n = normalized_propagation_matrix(target), target.features, target.base.num_nodes
    else:
        op, x, n = gcn_operator(target), target.features, target.num_nodes
    return gcn_forward(op, x, model, train_mode=False).logits[:n]


def evaluate(model: ModelState, target, split: Split, mask: str = "test") -> metrics.MetricsReport:
    """Metrics on one split mask, with per-class heterophily attached."""
    graph = target.base if isinstance(target, AugmentedGraph) else target
    preds = predict(model, target).argmax(axis=1)
    class_h = heterophily.class_scores(graph)
    return metrics.compute(preds, graph.labels, split.mask(mask), graph.num_classes,
                           class_h=class_h, mask_name=mask)
