"""Generator / similarity-discriminator / attack-discriminator attack engine.

The generator (MAG) is a 2-layer GCN feature extractor followed by
dimension-expansion matrices that reconstruct a continuous adjacency
and/or attribute matrix.  SD is a one-hidden-layer linear MLP judging
whether the editable entries look like the clean ones; AD is the target
model (or a trainable copy) whose confidence steers the generator toward
the attack label.
"""
from __future__ import annotations

import copy
import logging
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import scipy.sparse as sp

from .graph import (Augmentation, Graph, GraphSet, SubgraphView, degree_sequence,
                    k_hop_subgraph, normalize_adjacency, splice_subgraph)
from .models import (GraphClassifier, LinkPredictor, NodeClassifier, gcn_backward,
                     gcn_forward, normalize_dense, predict_graph_confidence)
from .numerics import (AdamState, TrainingError, adam_step, glorot, log_sigmoid,
                       log_softmax_rows, sigmoid, softmax_rows)
from .stealth import ConstraintSet, PerturbationReport, check_constraints

log = logging.getLogger(__name__)


class Strategy(str, Enum):
    STRUCTURE = "structure"
    ATTRIBUTE = "attribute"
    HYBRID = "hybrid"


class Scale(str, Enum):
    DIRECT = "direct"
    INDIRECT = "indirect"
    UNLIMITED = "unlimited"


class AdMode(str, Enum):
    FROZEN_TARGET = "frozen_target"
    TRAINABLE_SURROGATE = "trainable_surrogate"


# ------------------------------------------------------------ primitives

def discretize(m, adjacency: bool = False) -> np.ndarray:
    """Entries strictly above 0.5 become 1, everything else 0."""
    out = (np.asarray(m) > 0.5).astype(np.float64)
    if adjacency:
        np.fill_diagonal(out, 0.0)
    return out


def scale_masks(n: int, hops, targets, scale: Scale | str, k: int, K: int,
                exclude_pairs=()) -> tuple[np.ndarray, np.ndarray]:
    """Editable adjacency entries (n×n, symmetric, zero diagonal) and attribute rows.

    direct: pairs touching a target; indirect: pairs of non-target nodes
    within ``k`` hops; unlimited: pairs of any nodes within ``k`` hops.
    Nodes without a hop distance (augmented) count as hop ``K``.
    """
    scale = Scale(scale)
    targets = np.atleast_1d(np.asarray(targets, dtype=np.int64))
    hops = np.asarray(hops, dtype=np.int64).copy()
    hops[hops < 0] = K
    is_target = np.zeros(n, dtype=bool)
    is_target[targets] = True
    if scale is Scale.DIRECT:
        rows = is_target
        mask = rows[:, None] | rows[None, :]
    elif scale is Scale.INDIRECT:
        rows = (~is_target) & (hops <= k)
        mask = rows[:, None] & rows[None, :]
    else:
        rows = hops <= k
        mask = rows[:, None] & rows[None, :]
    mask = mask.copy()
    np.fill_diagonal(mask, False)
    for i, j in exclude_pairs:
        mask[i, j] = mask[j, i] = False
    return mask, rows


def apply_scale_mask(original, candidate, mask) -> np.ndarray:
    """Reset forbidden entries to ``original`` and re-symmetrize from the upper triangle."""
    out = np.where(mask, candidate, original)
    if out.ndim == 2 and out.shape[0] == out.shape[1] and mask.shape == out.shape:
        upper = np.triu(out, 1)
        out = upper + upper.T
    return out


def select_target_label(confidence_row, y: int, override: int | None = None) -> int:
    """Second most confident class (lowest index on ties) unless overridden."""
    conf = np.asarray(confidence_row, dtype=np.float64).ravel()
    if conf.size < 2:
        raise ValueError("need at least two classes")
    if override is not None:
        if override == y or not 0 <= override < conf.size:
            raise ValueError(f"target label {override} must differ from {y} and be a valid class")
        return int(override)
    masked = conf.copy()
    masked[y] = -np.inf
    return int(np.argmax(masked))


# ------------------------------------------------------------ players

@dataclass
class MagModel:
    params: dict  # W0, W1 (extractor), WexA, WexX
    attr_low: np.ndarray | None = None
    attr_span: np.ndarray | None = None

    @property
    def d(self) -> int:
        return self.params["W1"].shape[1]


def init_mag(extractor_params: dict, n_sub: int, d_attr: int, rng: np.random.Generator,
             attribute_kind: str = "binary", x_parent=None) -> MagModel:
    w0 = extractor_params["W0"].copy()
    w1 = extractor_params["W1"].copy()
    d = w1.shape[1]
    params = {"W0": w0, "W1": w1, "WexA": glorot(rng, d, n_sub), "WexX": glorot(rng, d, d_attr)}
    low = span = None
    if attribute_kind == "continuous" and x_parent is not None:
        low = x_parent.min(axis=0)
        span = np.maximum(x_parent.max(axis=0) - low, 1e-6)
    return MagModel(params, low, span)


@dataclass
class SdModel:
    params: dict  # W0 (n_in×H), b0 (H), W1 (H×1), b1 (1)
    channel: str

    @property
    def n_input(self) -> int:
        return self.params["W0"].shape[0]


def init_sd(n_input: int, hidden: int, channel: str, rng: np.random.Generator) -> SdModel:
    return SdModel({"W0": glorot(rng, max(n_input, 1), hidden), "b0": np.zeros(hidden),
                    "W1": glorot(rng, hidden, 1), "b1": np.zeros(1)}, channel)


def sd_logit(sd: SdModel, h):
    h = np.asarray(h, dtype=np.float64).ravel()
    if h.size != sd.n_input:
        raise ValueError(f"SD expects {sd.n_input} inputs, got {h.size}")
    u = h @ sd.params["W0"] + sd.params["b0"]
    return float(u @ sd.params["W1"][:, 0] + sd.params["b1"][0]), u


def sd_forward(sd: SdModel, h) -> float:
    """Probability that ``h`` (flattened editable entries) comes from the clean graph."""
    return float(sigmoid(sd_logit(sd, h)[0]))


def _sd_param_grads(sd, h, u, do):
    w1 = sd.params["W1"][:, 0]
    du = w1 * do
    return {"W0": np.outer(h, du), "b0": du, "W1": (u * do)[:, None], "b1": np.array([do])}


def sd_loss_and_grads(sd: SdModel, h_real, h_fake):
    """-[log SD(real) + log(1 - SD(fake))] and its parameter gradients."""
    o_r, u_r = sd_logit(sd, h_real)
    o_f, u_f = sd_logit(sd, h_fake)
    loss = -(log_sigmoid(o_r) + log_sigmoid(-o_f))
    g_r = _sd_param_grads(sd, np.ravel(h_real), u_r, sigmoid(o_r) - 1.0)
    g_f = _sd_param_grads(sd, np.ravel(h_fake), u_f, sigmoid(o_f))
    return float(loss), {k: g_r[k] + g_f[k] for k in g_r}


def sd_input_grad_for_generator(sd: SdModel, h_fake, loss: str = "minimax"):
    """Generator objective against SD and its gradient w.r.t. the fake input.

    "minimax" is log(1 - SD(fake)); "nonsaturating" is -log SD(fake), which
    has the same optimum but keeps a gradient when SD rejects the fake.
    """
    o_f, _ = sd_logit(sd, h_fake)
    if loss == "nonsaturating":
        val, do = -float(log_sigmoid(o_f)), -float(sigmoid(-o_f))
    else:
        val, do = float(log_sigmoid(-o_f)), -float(sigmoid(o_f))
    dh = sd.params["W0"] @ (sd.params["W1"][:, 0] * do)
    return val, dh


@dataclass
class AdHandle:
    mode: AdMode
    model: object
    task: str

    @classmethod
    def create(cls, model, mode: AdMode | str = AdMode.FROZEN_TARGET) -> "AdHandle":
        mode = AdMode(mode)
        m = model if mode is AdMode.FROZEN_TARGET else model.copy()
        return cls(mode, m, model.task)


# ------------------------------------------------------------ AD objectives

def _ad_output(ad: AdHandle, a, x, offset, targets):
    cache, out = ad.model.forward_raw(a, x, offset)
    if ad.task == "node":
        return cache, out, out[targets[0]]
    if ad.task == "graph":
        return cache, out, out[0]
    z = out
    return cache, out, float(z[targets[0]] @ z[targets[1]])


def _ad_backprop(ad: AdHandle, cache, out, targets, d_score, want_inputs=True):
    """Backprop d(objective)/d(score) into model params and raw inputs."""
    if ad.task == "node":
        d_out = np.zeros_like(out)
        d_out[targets[0]] = d_score
    elif ad.task == "graph":
        d_out = np.asarray(d_score, dtype=np.float64)[None, :]
    else:
        d_out = np.zeros_like(out)
        i, j = targets[0], targets[1]
        d_out[i] += d_score * out[j]
        d_out[j] += d_score * out[i]
    return ad.model.backward_raw(cache, d_out, want_a=want_inputs, want_x=want_inputs)


def log_one_minus_conf(task: str, score, cls: int):
    """log(1 - AD^cls) and its gradient w.r.t. the score (logits or link logit)."""
    if task == "link":
        if cls == 1:
            return float(log_sigmoid(-score)), -float(sigmoid(score))
        return float(log_sigmoid(score)), float(sigmoid(-score))
    logits = np.asarray(score, dtype=np.float64)
    logp = log_softmax_rows(logits[None, :])[0]
    p = np.exp(logp)
    others = np.delete(logits, cls)
    m = others.max()
    lse_others = m + math.log(np.exp(others - m).sum())
    lse_all = logits.max() + math.log(np.exp(logits - logits.max()).sum())
    q = np.exp(logits - lse_others)
    q[cls] = 0.0
    return float(lse_others - lse_all), q - p


def log_conf(task: str, score, cls: int):
    """log AD^cls and its gradient w.r.t. the score."""
    if task == "link":
        if cls == 1:
            return float(log_sigmoid(score)), float(sigmoid(-score))
        return float(log_sigmoid(-score)), -float(sigmoid(score))
    logits = np.asarray(score, dtype=np.float64)
    logp = log_softmax_rows(logits[None, :])[0]
    g = -np.exp(logp)
    g[cls] += 1.0
    return float(logp[cls]), g


# ------------------------------------------------------------ GAN state

@dataclass
class GanState:
    """Everything one adversarial-example search needs on a fixed subgraph."""
    view: SubgraphView
    task: str
    strategy: Strategy
    a0: np.ndarray             # clean dense subgraph adjacency
    x0: np.ndarray             # clean subgraph attributes
    offset: np.ndarray         # degree mass to nodes outside the subgraph
    a_hat0: np.ndarray         # normalized clean adjacency (extractor input)
    mask_a: np.ndarray
    mask_x_rows: np.ndarray
    targets: np.ndarray        # local target indices
    y: int
    y_tar: int
    mag: MagModel
    sds: dict
    ad: AdHandle
    attribute_kind: str = "binary"
    generator_loss: str = "nonsaturating"
    opt_sd: dict = field(default_factory=dict)
    opt_mag_sd: AdamState | None = None
    opt_mag_ad: AdamState | None = None
    opt_ad: AdamState | None = None
    link_cap: int | None = None  # candidate projection caps (None: no projection)
    attr_cap: int | None = None
    joint_cap: bool = False

    @property
    def upper_idx(self):
        if not hasattr(self, "_upper"):
            iu = np.triu_indices(self.a0.shape[0], 1)
            keep = self.mask_a[iu]
            self._upper = (iu[0][keep], iu[1][keep])
        return self._upper

    @property
    def uses_structure(self) -> bool:
        return self.strategy in (Strategy.STRUCTURE, Strategy.HYBRID)

    @property
    def uses_attributes(self) -> bool:
        return self.strategy in (Strategy.ATTRIBUTE, Strategy.HYBRID)


@dataclass
class MagOutput:
    a_in: np.ndarray
    x_in: np.ndarray
    cache: dict


def _extract(mag: MagModel, a_hat, x):
    c = gcn_forward(a_hat, x, mag.params["W0"], mag.params["W1"])
    return c, softmax_rows(c.out)


def _attr_from_logits(mag: MagModel, p, kind):
    s = sigmoid(p)
    if kind == "continuous" and mag.attr_low is not None:
        return mag.attr_low + mag.attr_span * s, s
    return s, s


def mag_forward(state: GanState) -> MagOutput:
    """Continuous generated subgraph with non-editable entries held at the clean values."""
    mag = state.mag
    c_ext, z = _extract(mag, state.a_hat0, state.x0)
    cache = {"c_ext": c_ext, "z": z}
    a_in = state.a0
    x_in = state.x0
    if state.uses_structure:
        m = z @ mag.params["WexA"]
        ac = sigmoid((m + m.T) / 2.0)
        cache["ac"] = ac
        a_in = np.where(state.mask_a, ac, state.a0)
    if state.uses_attributes:
        if state.strategy is Strategy.HYBRID:
            a_d = discretize(a_in, adjacency=True)
            a_hat2, _ = normalize_dense(a_d, state.offset)
            c_x, zx = _extract(mag, a_hat2, state.x0)
        else:
            c_x, zx = c_ext, z
        xc, s = _attr_from_logits(mag, zx @ mag.params["WexX"], state.attribute_kind)
        cache.update(c_x=c_x, zx=zx, xs=s)
        x_in = np.where(state.mask_x_rows[:, None], xc, state.x0)
    return MagOutput(a_in, x_in, cache)


def _softmax_backward(z, dz):
    return z * (dz - (dz * z).sum(axis=1, keepdims=True))


def mag_backward(state: GanState, out: MagOutput, d_a_in=None, d_x_in=None) -> dict:
    mag = state.mag
    p = mag.params
    c = out.cache
    grads = {k: np.zeros_like(v) for k, v in p.items()}
    dz = np.zeros_like(c["z"])
    if d_a_in is not None and state.uses_structure:
        ac = c["ac"]
        ds = d_a_in * state.mask_a * ac * (1.0 - ac)
        dm = (ds + ds.T) / 2.0
        grads["WexA"] += c["z"].T @ dm
        dz += dm @ p["WexA"].T
    if d_x_in is not None and state.uses_attributes:
        s = c["xs"]
        dxc = d_x_in * state.mask_x_rows[:, None]
        if state.attribute_kind == "continuous" and mag.attr_span is not None:
            dxc = dxc * mag.attr_span
        dpx = dxc * s * (1.0 - s)
        grads["WexX"] += c["zx"].T @ dpx
        dzx = dpx @ p["WexX"].T
        if state.strategy is Strategy.HYBRID:
            d_logits = _softmax_backward(c["zx"], dzx)
            dw0, dw1, _, _ = gcn_backward(c["c_x"], d_logits, p["W0"], p["W1"])
            grads["W0"] += dw0
            grads["W1"] += dw1
        else:
            dz += dzx
    if np.any(dz):
        d_logits = _softmax_backward(c["z"], dz)
        dw0, dw1, _, _ = gcn_backward(c["c_ext"], d_logits, p["W0"], p["W1"])
        grads["W0"] += dw0
        grads["W1"] += dw1
    return grads


def sd_inputs(state: GanState, a, x) -> dict:
    """Flattened editable entries per SD channel."""
    h = {}
    if "structure" in state.sds:
        iu = state.upper_idx
        h["structure"] = a[iu]
    if "attributes" in state.sds:
        h["attributes"] = x[state.mask_x_rows].ravel()
    return h


def _check(loss, what):
    if not np.isfinite(loss):
        raise TrainingError(f"non-finite {what} loss")


def train_sd_step(state: GanState, fake: MagOutput | None = None) -> float:
    """One Adam step of every SD on clean vs (constant) generated input."""
    fake = fake or mag_forward(state)
    real_h = sd_inputs(state, state.a0, state.x0)
    fake_h = sd_inputs(state, fake.a_in, fake.x_in)
    total = 0.0
    for ch, sd in state.sds.items():
        loss, grads = sd_loss_and_grads(sd, real_h[ch], fake_h[ch])
        _check(loss, "SD")
        adam_step(sd.params, grads, state.opt_sd[ch])
        total += loss
    return total


def mag_sd_loss_and_grads(state: GanState):
    out = mag_forward(state)
    fake_h = sd_inputs(state, out.a_in, out.x_in)
    loss = 0.0
    d_a = d_x = None
    for ch, sd in state.sds.items():
        val, dh = sd_input_grad_for_generator(sd, fake_h[ch], state.generator_loss)
        loss += val
        if ch == "structure":
            d_a = np.zeros_like(out.a_in)
            d_a[state.upper_idx] = dh
        else:
            d_x = np.zeros_like(out.x_in)
            d_x[state.mask_x_rows] = dh.reshape(-1, out.x_in.shape[1])
    return loss, mag_backward(state, out, d_a, d_x)


def train_mag_sd_step(state: GanState) -> float:
    loss, grads = mag_sd_loss_and_grads(state)
    _check(loss, "MAG/SD")
    adam_step(state.mag.params, grads, state.opt_mag_sd)
    return loss


def mag_ad_loss_and_grads(state: GanState):
    """log(1 - AD^{y_tar}) (or -log AD^{y_tar}) on the continuous generated subgraph."""
    out = mag_forward(state)
    cache, raw, score = _ad_output(state.ad, out.a_in, out.x_in, state.offset, state.targets)
    if state.generator_loss == "nonsaturating":
        loss, d_score = log_conf(state.task, score, state.y_tar)
        loss, d_score = -loss, -np.asarray(d_score)
    else:
        loss, d_score = log_one_minus_conf(state.task, score, state.y_tar)
    _, d_a, d_x = _ad_backprop(state.ad, cache, raw, state.targets, d_score)
    return loss, mag_backward(state, out, d_a if state.uses_structure else None,
                              d_x if state.uses_attributes else None)


def train_mag_ad_step(state: GanState) -> float:
    loss, grads = mag_ad_loss_and_grads(state)
    _check(loss, "MAG/AD")
    adam_step(state.mag.params, grads, state.opt_mag_ad)
    return loss


def ad_loss_and_grads(state: GanState, fake: MagOutput):
    """-[log AD^y(real) + log(1 - AD^y(fake))] w.r.t. the surrogate's parameters."""
    ad = state.ad
    c_r, raw_r, s_r = _ad_output(ad, state.a0, state.x0, state.offset, state.targets)
    l_r, g_r = log_conf(state.task, s_r, state.y)
    c_f, raw_f, s_f = _ad_output(ad, fake.a_in, fake.x_in, state.offset, state.targets)
    l_f, g_f = log_one_minus_conf(state.task, s_f, state.y)
    pr, _, _ = _ad_backprop(ad, c_r, raw_r, state.targets, -np.asarray(g_r), want_inputs=False)
    pf, _, _ = _ad_backprop(ad, c_f, raw_f, state.targets, -np.asarray(g_f), want_inputs=False)
    return -(l_r + l_f), {k: pr[k] + pf[k] for k in pr}


def train_ad_step(state: GanState, fake: MagOutput | None = None) -> float | None:
    if state.ad.mode is AdMode.FROZEN_TARGET:
        log.debug("AD step skipped: frozen target")
        return None
    fake = fake or mag_forward(state)
    loss, grads = ad_loss_and_grads(state, fake)
    _check(loss, "AD")
    adam_step(state.ad.model.params, grads, state.opt_ad)
    return loss


def generate_candidate(state: GanState) -> tuple[np.ndarray, np.ndarray]:
    """Discrete adjacency/attributes for the current generator (masked, projected)."""
    out = mag_forward(state)
    a = discretize(out.a_in, adjacency=True) if state.uses_structure else state.a0
    a = apply_scale_mask(state.a0, a, state.mask_a)
    if state.uses_attributes:
        x = discretize(out.x_in) if state.attribute_kind == "binary" else out.x_in
        x = np.where(state.mask_x_rows[:, None], x, state.x0)
    else:
        x = state.x0
    if state.link_cap is not None:
        a, x = project_to_budget(state, out, a, x)
    return a, x


def _keep_top(scores, cap):
    keep = np.zeros(len(scores), dtype=bool)
    if cap > 0 and len(scores):
        keep[np.argsort(-scores, kind="stable")[:cap]] = True
    return keep


def project_to_budget(state: GanState, out: MagOutput, a, x):
    """Keep only the most decisive flips when a candidate exceeds the budget.

    A flip's score is the distance of its continuous value from the clean
    value, so the retained edits are the ones the generator is most sure of.
    """
    iu = np.triu_indices(a.shape[0], 1)
    lf = np.flatnonzero(a[iu] != state.a0[iu])
    l_score = np.abs(out.a_in[iu][lf] - state.a0[iu][lf])
    xr, xc = np.nonzero(x != state.x0)
    x_score = np.abs(out.x_in[xr, xc] - state.x0[xr, xc])
    if state.joint_cap:
        keep = _keep_top(np.concatenate([l_score, x_score]), state.link_cap)
        keep_l, keep_x = keep[:len(lf)], keep[len(lf):]
    else:
        keep_l = _keep_top(l_score, state.link_cap)
        keep_x = _keep_top(x_score, state.attr_cap)
    if not keep_l.all():
        a = a.copy()
        r, c = iu[0][lf[~keep_l]], iu[1][lf[~keep_l]]
        a[r, c] = state.a0[r, c]
        a[c, r] = state.a0[c, r]
    if not keep_x.all():
        x = x.copy()
        x[xr[~keep_x], xc[~keep_x]] = state.x0[xr[~keep_x], xc[~keep_x]]
    return a, x


# ------------------------------------------------------------ task/result

@dataclass
class AttackTask:
    task: str
    target: object                # node id, graph index, or (i, j) pair
    y: int
    y_tar: int
    strategy: Strategy = Strategy.STRUCTURE
    scale: Scale = Scale.DIRECT
    K: int = 3
    k: int | None = None
    constraints: ConstraintSet = field(default_factory=ConstraintSet)
    seed: int = 0
    examples_per_target: int = 20
    max_epochs: int = 40
    warmup_epochs: int = 3
    k_sd: int = 10
    k_mag: int = 10
    k_ad: int = 10
    lr: float = 0.03
    hidden_sd: int = 64
    ad_mode: AdMode = AdMode.FROZEN_TARGET
    augmentation: Augmentation = Augmentation.RANDOM_OTHER_CLASS
    augmentation_ratio: float = 0.2
    generator_loss: str = "nonsaturating"
    project_budget: bool | None = None  # None: only for scale=unlimited

    def __post_init__(self):
        self.strategy = Strategy(self.strategy)
        self.scale = Scale(self.scale)
        self.ad_mode = AdMode(self.ad_mode)
        self.augmentation = Augmentation(self.augmentation)
        if self.k is None:
            self.k = self.K
        if self.y_tar == self.y:
            raise ValueError("target label must differ from the true label")
        if self.k > self.K:
            raise ValueError("scale hop k must not exceed K")
        if self.task not in ("node", "graph", "link"):
            raise ValueError(f"unknown task {self.task!r}")
        if self.generator_loss not in ("minimax", "nonsaturating"):
            raise ValueError(f"unknown generator loss {self.generator_loss!r}")
        if self.task == "graph" and self.scale is not Scale.UNLIMITED:
            raise ValueError("graph-level attacks edit the whole graph: use scale=unlimited")


@dataclass
class AttackResult:
    target: object
    success: bool
    adversarial: Graph
    report: PerturbationReport
    epochs_used: int
    examples_used: int
    y: int
    y_tar: int
    predicted: int
    flags: list = field(default_factory=list)
    flipped_links: list = field(default_factory=list)
    changed_attributes: list = field(default_factory=list)
    mispredicted: bool = False

    def to_record(self) -> dict:
        tgt = self.target
        if isinstance(tgt, (tuple, list, np.ndarray)):
            tgt = [int(t) for t in tgt]
        else:
            tgt = int(tgt)
        rec = {"target": tgt, "success": bool(self.success), "y": int(self.y),
               "y_tar": int(self.y_tar), "predicted": int(self.predicted),
               "epochs_used": int(self.epochs_used), "examples_used": int(self.examples_used),
               "flags": list(self.flags),
               "flipped_links": [[int(i), int(j)] for i, j in self.flipped_links],
               "changed_attributes": [[int(i), int(j)] for i, j in self.changed_attributes]}
        rec.update(self.report.to_dict())
        return rec


# ------------------------------------------------------------ context

class AttackContext:
    """Clean-graph quantities shared across targets of one experiment."""

    def __init__(self, task: str, model, data, extractor_params: dict | None = None):
        self.task = task
        self.model = model
        self.data = data
        if task == "graph":
            self.graph_set = data
            self.extractor_params = extractor_params or model.params
            return
        g: Graph = data
        self.graph = g
        self.a_hat = normalize_adjacency(g, dense=False)
        self.degrees = degree_sequence(g)
        self.xw = g.attributes @ model.params["W0"]
        self.extractor_params = extractor_params or model.params
        if task == "node":
            self.logits = model.logits(self.a_hat, g.attributes, xw=self.xw)
            self.probs = softmax_rows(self.logits)
            self.embedding = self.probs
        else:
            self.embedding = model.embed(self.a_hat, g.attributes, xw=self.xw)
        self._norms = np.linalg.norm(self.embedding, axis=1)

    # clean embedding used for SMR / similarity augmentation
    def extractor(self, g: Graph) -> np.ndarray:
        if g is self.graph:
            return self.embedding
        a_hat = normalize_adjacency(g, dense=False)
        xw = self._xw_for(g)
        if self.task == "node":
            return softmax_rows(self.model.logits(a_hat, g.attributes, xw=xw))
        return self.model.embed(a_hat, g.attributes, xw=xw)

    def _xw_for(self, g: Graph):
        if g.attributes is self.graph.attributes:
            return self.xw
        rows = np.flatnonzero((g.attributes != self.graph.attributes).any(axis=1))
        xw = self.xw.copy()
        if len(rows):
            xw[rows] = g.attributes[rows] @ self.model.params["W0"]
        return xw

    def similarity_to(self, i: int) -> np.ndarray:
        z = self.embedding
        denom = self._norms * self._norms[i]
        return np.divide(z @ z[i], denom, out=np.zeros(len(z)), where=denom > 0)

    def predict(self, g: Graph, target) -> int:
        a_hat = normalize_adjacency(g, dense=False)
        xw = self._xw_for(g)
        if self.task == "node":
            return int(np.argmax(self.model.logits(a_hat, g.attributes, xw=xw)[target]))
        z = self.model.embed(a_hat, g.attributes, xw=xw)
        i, j = target
        return int(z[i] @ z[j] > 0.0)

    def clean_prediction(self, target) -> int:
        if self.task == "node":
            return int(np.argmax(self.logits[target]))
        i, j = target
        return int(self.embedding[i] @ self.embedding[j] > 0.0)


# ------------------------------------------------------------ building

def _offsets(g: Graph, view: SubgraphView) -> np.ndarray:
    parent_deg = degree_sequence(g)[view.parent_index]
    return (parent_deg - degree_sequence(view.sub)).astype(np.float64)


def build_state(task: AttackTask, ctx: AttackContext, rng: np.random.Generator,
                view: SubgraphView | None = None) -> GanState:
    if task.task == "graph":
        g = ctx.graph_set.graphs[task.target]
        view = SubgraphView(g, np.arange(g.n), np.empty(0, dtype=np.int64),
                            Augmentation.NONE, np.zeros(g.n, dtype=np.int64))
        offset = np.zeros(g.n)
        exclude = ()
    else:
        g = ctx.graph
        targets = np.atleast_1d(task.target)
        if view is None:
            sims = None
            if task.augmentation is Augmentation.HIGH_SIMILARITY:
                sims = ctx.similarity_to
            view = k_hop_subgraph(g, targets, task.K, task.augmentation, sim_scores=sims,
                                  rng=rng, ratio=task.augmentation_ratio, target_label=task.y
                                  if task.task == "node" else None)
        offset = _offsets(g, view)
        exclude = [(0, 1)] if task.task == "link" else ()
    sub = view.sub
    a0 = sub.dense_adjacency()
    x0 = sub.attributes
    a_hat0, _ = normalize_dense(a0, offset)
    mask_a, rows = scale_masks(sub.n, view.hops, view.target_local, task.scale, task.k,
                               task.K, exclude)
    mag = init_mag(ctx.extractor_params, sub.n, sub.num_attributes, rng, sub.attribute_kind,
                   ctx.graph_set.graphs[task.target].attributes if task.task == "graph"
                   else ctx.graph.attributes)
    sds = {}
    if task.strategy in (Strategy.STRUCTURE, Strategy.HYBRID):
        n_in = int(np.triu(mask_a, 1).sum())
        sds["structure"] = init_sd(n_in, task.hidden_sd, "structure", rng)
    if task.strategy in (Strategy.ATTRIBUTE, Strategy.HYBRID):
        sds["attributes"] = init_sd(int(rows.sum()) * sub.num_attributes, task.hidden_sd,
                                    "attributes", rng)
    ad = AdHandle.create(ctx.model, task.ad_mode)
    return GanState(view=view, task=task.task, strategy=task.strategy, a0=a0, x0=x0,
                    offset=offset, a_hat0=a_hat0, mask_a=mask_a, mask_x_rows=rows,
                    targets=view.target_local, y=task.y, y_tar=task.y_tar, mag=mag, sds=sds,
                    ad=ad, attribute_kind=sub.attribute_kind, generator_loss=task.generator_loss,
                    opt_sd={ch: AdamState(task.lr) for ch in sds},
                    opt_mag_sd=AdamState(task.lr), opt_mag_ad=AdamState(task.lr),
                    opt_ad=AdamState(task.lr), **_caps(task, g))


def _caps(task: AttackTask, parent: Graph) -> dict:
    project = task.project_budget
    if project is None:
        project = task.scale is Scale.UNLIMITED
    if not project:
        return {}
    cset = task.constraints
    return {"link_cap": cset.link_budget(parent), "attr_cap": cset.attr_budget(parent),
            "joint_cap": cset.budget_mode != "graph"}


def run_epoch(state: GanState, task: AttackTask) -> None:
    for _ in range(task.k_sd):
        train_sd_step(state)
    for _ in range(task.k_mag):
        train_mag_sd_step(state)
    for _ in range(task.k_ad):
        train_ad_step(state)
        train_mag_ad_step(state)


def _diff_records(view: SubgraphView, a0, a, x0, x):
    iu = np.triu_indices(a0.shape[0], 1)
    changed = a0[iu] != a[iu]
    pi = view.parent_index
    links = [(int(min(pi[i], pi[j])), int(max(pi[i], pi[j])))
             for i, j in zip(iu[0][changed], iu[1][changed])]
    rr, cc = np.nonzero(x0 != x)
    attrs = [(int(pi[r]), int(c)) for r, c in zip(rr, cc)]
    return sorted(links), sorted(attrs)


def _rank(report: PerturbationReport, mispredicted: bool):
    """Smaller is better: prefer mispredictions, passing constraints, fewer edits."""
    return (not mispredicted, sum(not v for v in report.verdicts.values()),
            report.links_changed + report.attrs_changed)


def run_attack(task: AttackTask, ctx: AttackContext) -> AttackResult:
    """Search for an adversarial example for one target (several restarts)."""
    if task.task == "graph":
        parent = ctx.graph_set.graphs[task.target]
        clean_pred = int(predict_graph_confidence(ctx.model, parent).labels[0])
        parent_targets = ()
    else:
        parent = ctx.graph
        clean_pred = ctx.clean_prediction(task.target)
        parent_targets = np.atleast_1d(task.target)
    smr_extractor = ctx.extractor if task.task != "graph" else None
    clean_emb = ctx.embedding if task.task != "graph" else None

    if clean_pred != task.y:
        report = check_constraints(parent, parent, task.constraints, smr_extractor,
                                   parent_targets, clean_emb)
        return AttackResult(task.target, True, parent, report, 0, 0, task.y, task.y_tar,
                            clean_pred, ["trivial"], mispredicted=True)

    best = None
    epochs_total = 0
    flags = []
    for example in range(task.examples_per_target):
        rng = np.random.default_rng(np.random.SeedSequence([task.seed, example]))
        state = build_state(task, ctx, rng)
        if state.view.augmentation_fallback and "augmentation_fallback" not in flags:
            flags.append("augmentation_fallback")
        if not state.mask_a.any() and not state.mask_x_rows.any():
            flags.append("empty_mask")
            break
        for epoch in range(1, task.max_epochs + 1):
            run_epoch(state, task)
            epochs_total += 1
            if epoch <= task.warmup_epochs:
                continue
            a, x = generate_candidate(state)
            if np.array_equal(a, state.a0) and np.array_equal(x, state.x0):
                continue
            adv_sub = state.view.sub.replace(adjacency=sp.csr_matrix(a), attributes=x)
            adv = splice_subgraph(parent, state.view, adv_sub)
            if task.task == "graph":
                pred = int(predict_graph_confidence(ctx.model, adv).labels[0])
            else:
                pred = ctx.predict(adv, task.target)
            mispredicted = pred != task.y
            report = check_constraints(parent, adv, task.constraints, smr_extractor,
                                       parent_targets, clean_emb) if mispredicted else \
                _budget_only(parent, adv, task.constraints)
            rank = _rank(report, mispredicted)
            if best is None or rank < best[0]:
                links, attrs = _diff_records(state.view, state.a0, a, state.x0, x)
                best = (rank, adv, report, pred, links, attrs, mispredicted)
            if mispredicted and report.passed:
                return AttackResult(task.target, True, adv, report, epochs_total, example + 1,
                                    task.y, task.y_tar, pred, flags, best[4], best[5], True)
    if best is None:
        report = check_constraints(parent, parent, task.constraints, smr_extractor,
                                   parent_targets, clean_emb)
        return AttackResult(task.target, False, parent, report, epochs_total,
                            task.examples_per_target, task.y, task.y_tar, clean_pred,
                            flags + ["no_candidate"])
    _, adv, report, pred, links, attrs, mis = best
    return AttackResult(task.target, False, adv, report, epochs_total, task.examples_per_target,
                        task.y, task.y_tar, pred, flags, links, attrs, mis)


def _budget_only(g, g2, cset: ConstraintSet) -> PerturbationReport:
    """Budget verdicts alone; used for candidates that did not flip the prediction."""
    budget_only = ConstraintSet(cset.budget_ratio, cset.budget_mode, d_min=cset.d_min,
                                name=cset.name)
    return check_constraints(g, g2, budget_only)


def copy_task(task: AttackTask, **changes) -> AttackTask:
    t = copy.copy(task)
    for k, v in changes.items():
        setattr(t, k, v)
    t.__post_init__()
    return t
