"""Target models: node GCN, pooled graph classifier and a GAE link predictor.

Every model exposes ``forward_raw`` / ``backward_raw`` on an unnormalized
dense adjacency so the attacker can push gradients through the model into
a generated graph.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .graph import Graph, GraphSet, LabeledSplit, LinkSample, normalize_adjacency, sample_non_edges
from .numerics import (AdamState, TrainingError, adam_step, glorot, log_sigmoid,
                       log_softmax_rows, one_hot, relu, sigmoid, softmax_rows)

CHECKPOINT_FORMAT = "ganattack-checkpoint"
CHECKPOINT_VERSION = 1


# ------------------------------------------------------------ GCN core

def normalize_dense(a, offset=None):
    """D^-1/2 (A + I) D^-1/2 on a dense (possibly continuous) adjacency.

    ``offset`` adds a constant to each degree; it accounts for links to nodes
    outside a subgraph. Returns (a_hat, cache) for ``normalize_dense_backward``.
    """
    a = np.asarray(a, dtype=np.float64)
    a_tilde = a + np.eye(a.shape[0])
    d = a_tilde.sum(axis=1)
    if offset is not None:
        d = d + offset
    s = 1.0 / np.sqrt(d)
    return a_tilde * s[:, None] * s[None, :], (a_tilde, s, d)


def normalize_dense_backward(cache, grad):
    """Gradient w.r.t. the raw adjacency given dL/dÂ (degree = row sum)."""
    a_tilde, s, d = cache
    direct = grad * s[:, None] * s[None, :]
    ds = ((grad + grad.T) * a_tilde * s[None, :]).sum(axis=1)
    gk = ds * (-0.5) * d ** -1.5
    return direct + gk[:, None]


@dataclass
class GcnCache:
    a_hat: object
    x: object
    xw: np.ndarray
    h_pre: np.ndarray
    h: np.ndarray
    hw: np.ndarray
    out: np.ndarray
    relu_out: bool


def gcn_forward(a_hat, x, w0, w1, relu_out=False, xw=None) -> GcnCache:
    """Â relu(Â X W0) W1, optionally followed by relu."""
    if xw is None:
        xw = x @ w0
    h_pre = a_hat @ xw
    h = relu(h_pre)
    hw = h @ w1
    out = np.asarray(a_hat @ hw)
    if relu_out:
        out = relu(out)
    return GcnCache(a_hat, x, np.asarray(xw), np.asarray(h_pre), h, hw, out, relu_out)


def gcn_backward(c: GcnCache, d_out, w0, w1, want_a=False, want_x=False):
    """Returns (dW0, dW1, dÂ or None, dX or None)."""
    if c.relu_out:
        d_out = d_out * (c.out > 0)
    a_t = c.a_hat.T
    d_hw = np.asarray(a_t @ d_out)
    dw1 = c.h.T @ d_hw
    dh_pre = (d_hw @ w1.T) * (c.h_pre > 0)
    d_xw = np.asarray(a_t @ dh_pre)
    dw0 = np.asarray(c.x.T @ d_xw)
    da = None
    if want_a:
        da = d_out @ c.hw.T + dh_pre @ c.xw.T
    dx = d_xw @ w0.T if want_x else None
    return dw0, dw1, da, dx


def _check_finite(loss, seed, epoch):
    if not math.isfinite(loss):
        raise TrainingError(f"non-finite training loss at epoch {epoch} (seed {seed})")


@dataclass
class TrainConfig:
    epochs: int = 200
    lr: float = 0.01
    hidden: int = 64
    seed: int = 0
    weight_decay: float = 5e-4
    patience: int = 20
    embedding_dim: int = 16  # link predictor only


# ------------------------------------------------------------- node task

@dataclass
class NodeClassifier:
    params: dict
    num_classes: int
    validation_accuracy: float = float("nan")
    task: str = "node"

    @property
    def hidden(self) -> int:
        return self.params["W0"].shape[1]

    def logits(self, a_hat, x, xw=None) -> np.ndarray:
        return gcn_forward(a_hat, x, self.params["W0"], self.params["W1"], xw=xw).out

    def forward_raw(self, a, x, offset=None):
        a_hat, ncache = normalize_dense(a, offset)
        c = gcn_forward(a_hat, x, self.params["W0"], self.params["W1"])
        return (ncache, c), c.out

    def backward_raw(self, cache, d_out, want_a=True, want_x=True):
        ncache, c = cache
        dw0, dw1, dah, dx = gcn_backward(c, d_out, self.params["W0"], self.params["W1"],
                                         want_a, want_x)
        da = normalize_dense_backward(ncache, dah) if want_a else None
        return {"W0": dw0, "W1": dw1}, da, dx

    def copy(self) -> "NodeClassifier":
        return NodeClassifier({k: v.copy() for k, v in self.params.items()}, self.num_classes,
                              self.validation_accuracy)


def init_node_classifier(d_in, hidden, num_classes, rng) -> NodeClassifier:
    return NodeClassifier({"W0": glorot(rng, d_in, hidden), "W1": glorot(rng, hidden, num_classes)},
                          num_classes)


def node_loss_and_grads(model: NodeClassifier, a_hat, x, ids, labels, weight_decay=0.0,
                        weights=None):
    """Mean cross-entropy over ``ids`` plus ½·wd·‖W0‖²; returns (loss, grads)."""
    p = model.params
    c = gcn_forward(a_hat, x, p["W0"], p["W1"])
    logp = log_softmax_rows(c.out[ids])
    y = one_hot(labels, model.num_classes)
    w = np.full(len(ids), 1.0 / len(ids)) if weights is None else np.asarray(weights)
    loss = float(-(w * (y * logp).sum(axis=1)).sum())
    d_out = np.zeros_like(c.out)
    np.add.at(d_out, ids, w[:, None] * (np.exp(logp) - y))
    dw0, dw1, _, _ = gcn_backward(c, d_out, p["W0"], p["W1"])
    if weight_decay:
        loss += 0.5 * weight_decay * float((p["W0"] ** 2).sum())
        dw0 = dw0 + weight_decay * p["W0"]
    return loss, {"W0": dw0, "W1": dw1}


@dataclass
class TargetView:
    """The rows of Â and X a 2-layer GCN needs to score one node."""
    a1: np.ndarray   # Â[t, n1]
    a2: np.ndarray   # Â[n1, n2]
    x2: np.ndarray   # X[n2]


def target_view(a_hat: sp.csr_matrix, x, t: int) -> TargetView:
    a_hat = sp.csr_matrix(a_hat)
    n1 = a_hat[t].indices
    rows = a_hat[n1]
    n2 = np.unique(rows.indices)
    return TargetView(a_hat[t][:, n1].toarray(), rows[:, n2].toarray(), np.asarray(x)[n2])


def node_target_loss_and_grads(model: NodeClassifier, view: TargetView, label: int,
                               weight: float = 1.0):
    """Weighted cross-entropy of one node from its 2-hop view (same value as the full GCN)."""
    p = model.params
    h_pre = view.a2 @ (view.x2 @ p["W0"])
    h = relu(h_pre)
    ah = view.a1 @ h
    logp = log_softmax_rows(ah @ p["W1"])
    y = one_hot([label], model.num_classes)
    loss = float(-weight * (y * logp).sum())
    d_logits = weight * (np.exp(logp) - y)
    dh = (view.a1.T @ d_logits) @ p["W1"].T
    d_xw = view.a2.T @ (dh * (h_pre > 0))
    return loss, {"W0": view.x2.T @ d_xw, "W1": ah.T @ d_logits}


def accuracy(pred_labels, labels) -> float:
    labels = np.asarray(labels)
    return float(np.mean(np.asarray(pred_labels) == labels)) if len(labels) else float("nan")


def train_node_classifier(g: Graph, split: LabeledSplit, cfg: TrainConfig | None = None,
                          model: NodeClassifier | None = None) -> NodeClassifier:
    cfg = cfg or TrainConfig()
    if g.node_labels is None:
        raise ValueError("node classification needs node labels")
    rng = np.random.default_rng(cfg.seed)
    if model is None:
        model = init_node_classifier(g.num_attributes, cfg.hidden, g.num_classes, rng)
    a_hat = normalize_adjacency(g, dense=False)
    x = g.attributes
    y = g.node_labels
    opt = AdamState(learning_rate=cfg.lr)
    best = (np.inf, {k: v.copy() for k, v in model.params.items()})
    stall = 0
    for epoch in range(cfg.epochs):
        loss, grads = node_loss_and_grads(model, a_hat, x, split.train, y[split.train],
                                          cfg.weight_decay)
        _check_finite(loss, cfg.seed, epoch)
        adam_step(model.params, grads, opt)
        if len(split.validation):
            val_loss, _ = node_loss_and_grads(model, a_hat, x, split.validation,
                                              y[split.validation])
            if val_loss < best[0] - 1e-9:
                best = (val_loss, {k: v.copy() for k, v in model.params.items()})
                stall = 0
            else:
                stall += 1
                if cfg.patience and stall >= cfg.patience:
                    break
    if len(split.validation) and np.isfinite(best[0]):
        model.params = best[1]
        pred = predict_node_confidence(model, g).labels
        model.validation_accuracy = accuracy(pred[split.validation], y[split.validation])
    return model


@dataclass
class PredictionConfidence:
    probabilities: np.ndarray
    labels: np.ndarray


def predict_node_confidence(m: NodeClassifier, g: Graph, a_hat=None, xw=None) -> PredictionConfidence:
    if g.num_attributes != m.params["W0"].shape[0]:
        raise ValueError(f"graph has {g.num_attributes} attributes, model expects "
                         f"{m.params['W0'].shape[0]}")
    if a_hat is None:
        a_hat = normalize_adjacency(g, dense=False)
    probs = softmax_rows(m.logits(a_hat, g.attributes, xw=xw))
    return PredictionConfidence(probs, probs.argmax(axis=1))


# ------------------------------------------------------------ graph task

@dataclass
class GraphClassifier:
    params: dict
    num_classes: int
    validation_accuracy: float = float("nan")
    task: str = "graph"

    def _readout(self, pooled):
        return pooled @ self.params["Wc"] + self.params["bc"]

    def forward_raw(self, a, x, offset=None):
        if a.shape[0] == 0:
            raise ValueError("empty graph")
        a_hat, ncache = normalize_dense(a, offset)
        c = gcn_forward(a_hat, x, self.params["W0"], self.params["W1"], relu_out=True)
        pooled = c.out.mean(axis=0, keepdims=True)
        return (ncache, c), self._readout(pooled)

    def backward_raw(self, cache, d_logits, want_a=True, want_x=True):
        ncache, c = cache
        pooled = c.out.mean(axis=0, keepdims=True)
        d_pooled = d_logits @ self.params["Wc"].T
        d_out = np.repeat(d_pooled / c.out.shape[0], c.out.shape[0], axis=0)
        dw0, dw1, dah, dx = gcn_backward(c, d_out, self.params["W0"], self.params["W1"],
                                         want_a, want_x)
        grads = {"W0": dw0, "W1": dw1, "Wc": pooled.T @ d_logits, "bc": d_logits.sum(axis=0)}
        da = normalize_dense_backward(ncache, dah) if want_a else None
        return grads, da, dx

    def copy(self) -> "GraphClassifier":
        return GraphClassifier({k: v.copy() for k, v in self.params.items()}, self.num_classes,
                               self.validation_accuracy)


def init_graph_classifier(d_in, hidden, num_classes, rng) -> GraphClassifier:
    return GraphClassifier({"W0": glorot(rng, d_in, hidden), "W1": glorot(rng, hidden, hidden),
                            "Wc": glorot(rng, hidden, num_classes), "bc": np.zeros(num_classes)},
                           num_classes)


def batch_graphs(graphs):
    """Block-diagonal normalized adjacency, stacked attributes, mean-pool matrix."""
    blocks = [normalize_adjacency(g, dense=False) for g in graphs]
    a_hat = sp.block_diag(blocks, format="csr")
    x = np.vstack([g.attributes for g in graphs])
    sizes = np.array([g.n for g in graphs])
    rows = np.repeat(np.arange(len(graphs)), sizes)
    pool = sp.csr_matrix((1.0 / sizes[rows], (rows, np.arange(len(rows)))),
                         shape=(len(graphs), len(rows)))
    return a_hat, x, pool


def graph_loss_and_grads(model: GraphClassifier, batch, labels, weight_decay=0.0):
    a_hat, x, pool = batch
    p = model.params
    c = gcn_forward(a_hat, x, p["W0"], p["W1"], relu_out=True)
    pooled = np.asarray(pool @ c.out)
    logits = model._readout(pooled)
    logp = log_softmax_rows(logits)
    y = one_hot(labels, model.num_classes)
    n = len(labels)
    loss = float(-(y * logp).sum() / n)
    d_logits = (np.exp(logp) - y) / n
    d_out = np.asarray(pool.T @ (d_logits @ p["Wc"].T))
    dw0, dw1, _, _ = gcn_backward(c, d_out, p["W0"], p["W1"])
    grads = {"W0": dw0, "W1": dw1, "Wc": pooled.T @ d_logits, "bc": d_logits.sum(axis=0)}
    if weight_decay:
        loss += 0.5 * weight_decay * float((p["W0"] ** 2).sum())
        grads["W0"] = grads["W0"] + weight_decay * p["W0"]
    return loss, grads


def train_graph_classifier(gs: GraphSet, split: LabeledSplit, cfg: TrainConfig | None = None
                           ) -> GraphClassifier:
    cfg = cfg or TrainConfig()
    dims = {g.num_attributes for g in gs.graphs}
    if len(dims) != 1:
        raise ValueError(f"graphs have differing attribute dimensions {sorted(dims)}")
    if any(g.n == 0 for g in gs.graphs):
        raise ValueError("empty graph in set")
    rng = np.random.default_rng(cfg.seed)
    model = init_graph_classifier(dims.pop(), cfg.hidden, gs.num_classes, rng)
    train = batch_graphs([gs.graphs[i] for i in split.train])
    val = batch_graphs([gs.graphs[i] for i in split.validation]) if len(split.validation) else None
    y = gs.graph_labels
    opt = AdamState(learning_rate=cfg.lr)
    best = (np.inf, {k: v.copy() for k, v in model.params.items()})
    stall = 0
    for epoch in range(cfg.epochs):
        loss, grads = graph_loss_and_grads(model, train, y[split.train], cfg.weight_decay)
        _check_finite(loss, cfg.seed, epoch)
        adam_step(model.params, grads, opt)
        if val is not None:
            val_loss, _ = graph_loss_and_grads(model, val, y[split.validation])
            if val_loss < best[0] - 1e-9:
                best = (val_loss, {k: v.copy() for k, v in model.params.items()})
                stall = 0
            else:
                stall += 1
                if cfg.patience and stall >= cfg.patience:
                    break
    if val is not None:
        model.params = best[1]
        pred = predict_graph_labels(model, [gs.graphs[i] for i in split.validation])
        model.validation_accuracy = accuracy(pred, y[split.validation])
    return model


def predict_graph_confidence(m: GraphClassifier, g: Graph) -> PredictionConfidence:
    if g.n == 0:
        raise ValueError("empty graph")
    _, logits = m.forward_raw(g.dense_adjacency(), g.attributes)
    probs = softmax_rows(logits)
    return PredictionConfidence(probs, probs.argmax(axis=1))


def predict_graph_labels(m: GraphClassifier, graphs) -> np.ndarray:
    if not graphs:
        return np.empty(0, dtype=np.int64)
    a_hat, x, pool = batch_graphs(graphs)
    c = gcn_forward(a_hat, x, m.params["W0"], m.params["W1"], relu_out=True)
    return m._readout(np.asarray(pool @ c.out)).argmax(axis=1)


# ------------------------------------------------------------- link task

@dataclass
class LinkPredictor:
    params: dict
    validation_auc: float = float("nan")
    task: str = "link"
    num_classes: int = 2

    def embed(self, a_hat, x, xw=None) -> np.ndarray:
        return gcn_forward(a_hat, x, self.params["W0"], self.params["W1"], xw=xw).out

    def forward_raw(self, a, x, offset=None):
        a_hat, ncache = normalize_dense(a, offset)
        c = gcn_forward(a_hat, x, self.params["W0"], self.params["W1"])
        return (ncache, c), c.out

    def backward_raw(self, cache, d_z, want_a=True, want_x=True):
        ncache, c = cache
        dw0, dw1, dah, dx = gcn_backward(c, d_z, self.params["W0"], self.params["W1"],
                                         want_a, want_x)
        da = normalize_dense_backward(ncache, dah) if want_a else None
        return {"W0": dw0, "W1": dw1}, da, dx

    def copy(self) -> "LinkPredictor":
        return LinkPredictor({k: v.copy() for k, v in self.params.items()}, self.validation_auc)


def link_loss_and_grads(model: LinkPredictor, a_hat, x, pairs, labels, xw=None):
    p = model.params
    c = gcn_forward(a_hat, x, p["W0"], p["W1"], xw=xw)
    z = c.out
    s = (z[pairs[:, 0]] * z[pairs[:, 1]]).sum(axis=1)
    y = np.asarray(labels, dtype=np.float64)
    n = len(pairs)
    loss = float(-(y * log_sigmoid(s) + (1 - y) * log_sigmoid(-s)).sum() / n)
    ds = (sigmoid(s) - y) / n
    dz = np.zeros_like(z)
    np.add.at(dz, pairs[:, 0], ds[:, None] * z[pairs[:, 1]])
    np.add.at(dz, pairs[:, 1], ds[:, None] * z[pairs[:, 0]])
    dw0, dw1, _, _ = gcn_backward(c, dz, p["W0"], p["W1"])
    return loss, {"W0": dw0, "W1": dw1}


def roc_auc(scores, labels) -> float:
    """Mann-Whitney AUC with average ranks for ties."""
    from scipy.stats import rankdata
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    n_pos, n_neg = labels.sum(), (~labels).sum()
    if n_pos == 0 or n_neg == 0:
        return float("nan")
    ranks = rankdata(scores)
    return float((ranks[labels].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def train_link_predictor(g: Graph, sample: LinkSample, cfg: TrainConfig | None = None,
                         validation: LinkSample | None = None) -> LinkPredictor:
    """GAE on the observed graph ``g``; negatives are resampled every epoch."""
    cfg = cfg or TrainConfig()
    sample.validate_against(g)
    rng = np.random.default_rng(cfg.seed)
    model = LinkPredictor({"W0": glorot(rng, g.num_attributes, cfg.hidden),
                           "W1": glorot(rng, cfg.hidden, cfg.embedding_dim)})
    a_hat = normalize_adjacency(g, dense=False)
    x = sp.csr_matrix(g.attributes) if _is_identity(g.attributes) else g.attributes
    pos = sample.positives
    opt = AdamState(learning_rate=cfg.lr)
    best = (-np.inf, {k: v.copy() for k, v in model.params.items()})
    stall = 0
    for epoch in range(cfg.epochs):
        neg = sample_non_edges(g, len(pos), rng)
        pairs = np.vstack([pos, neg])
        labels = np.r_[np.ones(len(pos)), np.zeros(len(neg))]
        loss, grads = link_loss_and_grads(model, a_hat, x, pairs, labels)
        _check_finite(loss, cfg.seed, epoch)
        adam_step(model.params, grads, opt)
        if validation is not None and len(validation.positives):
            auc = link_auc(model, g, validation, a_hat)
            if auc > best[0] + 1e-9:
                best = (auc, {k: v.copy() for k, v in model.params.items()})
                stall = 0
            else:
                stall += 1
                if cfg.patience and stall >= cfg.patience:
                    break
    if validation is not None and len(validation.positives):
        model.params = best[1]
        model.validation_auc = best[0]
    return model


def _is_identity(x) -> bool:
    return x.shape[0] == x.shape[1] and np.count_nonzero(x) == x.shape[0] \
        and np.array_equal(np.diag(x), np.ones(x.shape[0]))


def predict_link_confidence(m: LinkPredictor, g: Graph, a_hat=None) -> PredictionConfidence:
    if a_hat is None:
        a_hat = normalize_adjacency(g, dense=False)
    z = m.embed(a_hat, g.attributes)
    probs = sigmoid(z @ z.T)
    return PredictionConfidence(probs, (probs > 0.5).astype(np.int64))


def link_scores(m: LinkPredictor, g: Graph, pairs, a_hat=None, xw=None) -> np.ndarray:
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    if a_hat is None:
        a_hat = normalize_adjacency(g, dense=False)
    z = m.embed(a_hat, g.attributes, xw=xw)
    return sigmoid((z[pairs[:, 0]] * z[pairs[:, 1]]).sum(axis=1))


def link_auc(m: LinkPredictor, g: Graph, sample: LinkSample, a_hat=None) -> float:
    pairs = np.vstack([sample.positives, sample.negatives])
    labels = np.r_[np.ones(len(sample.positives)), np.zeros(len(sample.negatives))]
    return roc_auc(link_scores(m, g, pairs, a_hat), labels)


# ----------------------------------------------------------- checkpoints

@dataclass
class Checkpoint:
    model: object
    metadata: dict = field(default_factory=dict)


def model_to_dict(model, metadata=None) -> dict:
    params = {name: {"shape": list(v.shape), "data": [float(t) for t in np.ravel(v)]}
              for name, v in sorted(model.params.items())}
    return {"format": CHECKPOINT_FORMAT, "version": CHECKPOINT_VERSION, "task": model.task,
            "num_classes": int(model.num_classes), "metadata": metadata or {}, "params": params}


def model_from_dict(d: dict):
    if d.get("format") != CHECKPOINT_FORMAT:
        raise ValueError("not a checkpoint file")
    if d.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {d.get('version')}")
    params = {k: np.array(v["data"], dtype=np.float64).reshape(v["shape"])
              for k, v in d["params"].items()}
    task = d["task"]
    if task == "node":
        return NodeClassifier(params, d["num_classes"])
    if task == "graph":
        return GraphClassifier(params, d["num_classes"])
    if task == "link":
        return LinkPredictor(params)
    raise ValueError(f"unknown checkpoint task {task!r}")


def save_checkpoint(model, path, metadata=None) -> None:
    text = json.dumps(model_to_dict(model, metadata), sort_keys=True, separators=(",", ":"))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text + "\n")


def load_checkpoint(path) -> Checkpoint:
    with open(path, encoding="utf-8") as fh:
        d = json.load(fh)
    return Checkpoint(model_from_dict(d), d.get("metadata", {}))
