"""Experiment orchestration: targets, metrics, DICE, similarity data, defense."""
from __future__ import annotations

import csv
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .attacker import AttackContext, AttackResult, AttackTask, run_attack, select_target_label
from .graph import Graph, GraphSet, LabeledSplit, random_split, split_links
from .models import (NodeClassifier, TrainConfig, accuracy, init_node_classifier, link_scores,
                     node_loss_and_grads, node_target_loss_and_grads, predict_graph_confidence,
                     predict_graph_labels, target_view, train_graph_classifier,
                     train_link_predictor, train_node_classifier)
from .numerics import AdamState, adam_step
from .stealth import (ConstraintSet, average_neighbor_similarity, check_constraints,
                      neighbor_similarities)

log = logging.getLogger(__name__)

AML_CAP = 100


# ------------------------------------------------------------ targets

@dataclass
class TargetSelection:
    targets: list
    labels: list
    shortfall: dict = field(default_factory=dict)


def select_targets(predicted, truth, candidates, per_class: int, seed: int,
                   num_classes: int | None = None) -> TargetSelection:
    """Sample ``per_class`` correctly predicted candidates from each class.

    ``candidates`` is a list of ids (ints or pairs); ``predicted``/``truth``
    are aligned with it.
    """
    predicted = np.asarray(predicted)
    truth = np.asarray(truth)
    rng = np.random.default_rng(seed)
    classes = range(num_classes) if num_classes is not None else np.unique(truth)
    chosen, labels, short = [], [], {}
    for c in classes:
        pool = np.flatnonzero((truth == c) & (predicted == c))
        if len(pool) < per_class:
            short[int(c)] = int(per_class - len(pool))
        pick = np.sort(rng.choice(pool, size=min(per_class, len(pool)), replace=False))
        for k in pick:
            chosen.append(candidates[k])
            labels.append(int(c))
    return TargetSelection(chosen, labels, short)


# ------------------------------------------------------------ metrics

@dataclass
class MetricReport:
    asr: float
    aml: float
    ama: float
    l2_mean: float
    attacked: int
    records: list

    def to_dict(self) -> dict:
        return {"asr": self.asr, "aml": self.aml, "ama": self.ama, "l2_mean": self.l2_mean,
                "attacked": self.attacked}


def _field(r, name):
    return r[name] if isinstance(r, dict) else getattr(r, name, None)


def _links(r):
    v = _field(r, "links_changed")
    return v if v is not None else r.report.links_changed


def _attrs(r):
    v = _field(r, "attrs_changed")
    return v if v is not None else r.report.attrs_changed


def asr(results) -> float:
    if not results:
        raise ValueError("no results")
    return sum(bool(_field(r, "success")) for r in results) / len(results)


def aml(results) -> float:
    if not results:
        raise ValueError("no results")
    return sum(min(_links(r), AML_CAP) for r in results) / len(results)


def ama(results) -> float:
    if not results:
        raise ValueError("no results")
    return sum(_attrs(r) for r in results) / len(results)


def metric_report(records: list) -> MetricReport:
    l2 = [r["l2_attr"] for r in records]
    return MetricReport(asr(records), aml(records), ama(records),
                        float(np.mean(l2)) if l2 else 0.0, len(records), records)


# ------------------------------------------------------------ DICE

@dataclass
class DiceResult:
    graph: Graph
    removed: list
    added: list
    flags: list


def dice_attack(g: Graph, target, budget: int, seed: int, task: str = "node",
                labels=None) -> DiceResult:
    """Disconnect b internal links of each target, connect M-b external ones.

    For link targets both endpoints are treated as targets and the budget is
    split between them; the target pair itself is never touched.
    """
    if budget < 1:
        raise ValueError("DICE budget must be >= 1")
    labels = g.node_labels if labels is None else labels
    rng = np.random.default_rng(seed)
    ends = [int(t) for t in np.atleast_1d(target)]
    forbidden = {(min(ends), max(ends))} if task == "link" and len(ends) == 2 else set()
    shares = [budget // len(ends) + (1 if k < budget % len(ends) else 0) for k in range(len(ends))]
    adj = g.adjacency.tolil(copy=True)
    removed, added, flags = [], [], []
    for t, m in zip(ends, shares):
        if m == 0:
            continue
        nbrs = [int(v) for v in adj.rows[t] if (min(t, v), max(t, v)) not in forbidden]
        b = int(rng.integers(0, min(m, len(nbrs)) + 1))
        for v in rng.choice(nbrs, size=b, replace=False) if b else []:
            adj[t, v] = 0
            adj[v, t] = 0
            removed.append((min(t, int(v)), max(t, int(v))))
        current = set(int(v) for v in adj.rows[t])
        pool = [v for v in range(g.n) if v != t and v not in current
                and (min(t, v), max(t, v)) not in forbidden
                and (labels is None or labels[v] != labels[t])]
        want = m - b
        if want > len(pool):
            flags.append(f"dice_short:{t}")
        for v in rng.choice(pool, size=min(want, len(pool)), replace=False) if pool else []:
            adj[t, v] = 1
            adj[v, t] = 1
            added.append((min(t, int(v)), max(t, int(v))))
    out = g.replace(adjacency=adj.tocsr())
    return DiceResult(out, removed, added, flags)


def dice_budget(ctx: AttackContext, target, cset: ConstraintSet) -> int:
    g = ctx.graph
    deg = sum(len(g.neighbors(int(t))) for t in np.atleast_1d(target))
    return max(1, min(deg, cset.link_budget(g)))


def run_dice(ctx: AttackContext, target, y: int, cset: ConstraintSet, seed: int,
             budget: int | None = None) -> AttackResult:
    g = ctx.graph
    m = budget if budget is not None else dice_budget(ctx, target, cset)
    d = dice_attack(g, target, m, seed, ctx.task)
    pred = ctx.predict(d.graph, target)
    extractor = ctx.extractor if cset.smr_threshold is not None else None
    report = check_constraints(g, d.graph, cset, extractor, np.atleast_1d(target), ctx.embedding)
    success = pred != y and report.passed
    flips = sorted(set(d.removed) | set(d.added))
    return AttackResult(target, success, d.graph, report, 0, 1, y, 1 - y if ctx.task == "link"
                        else -1, pred, d.flags, flips, [], pred != y)


# ------------------------------------------------------------ similarity

@dataclass
class SimilarityHistogram:
    edges: np.ndarray
    first: np.ndarray
    second: np.ndarray
    columns: tuple = ("linked_count", "unlinked_count")
    first_values: np.ndarray | None = None
    second_values: np.ndarray | None = None

    def fraction_above(self, threshold: float, which: str = "first") -> float:
        vals = self.first_values if which == "first" else self.second_values
        return float(np.mean(vals > threshold)) if len(vals) else float("nan")

    def rows(self):
        for k in range(len(self.first)):
            yield (float(self.edges[k]), float(self.edges[k + 1]), int(self.first[k]),
                   int(self.second[k]))

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(("bin_left", "bin_right") + tuple(self.columns))
            for row in self.rows():
                w.writerow(row)


def _pair_similarities(z, pairs):
    if len(pairs) == 0:
        return np.empty(0)
    a, b = z[pairs[:, 0]], z[pairs[:, 1]]
    denom = np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1)
    dots = (a * b).sum(axis=1)
    return np.divide(dots, denom, out=np.zeros_like(dots), where=denom > 0)


def similarity_distribution(g: Graph, z, mode: str = "linked_vs_unlinked", bins: int = 20,
                            seed: int = 0, before=None, after=None) -> SimilarityHistogram:
    """Cosine-similarity histograms over [-1, 1].

    ``linked_vs_unlinked``: all edges vs an equal-size uniform sample of
    non-edges.  ``target_avg_before_after``: the supplied per-target average
    neighbor similarities before and after attack.
    """
    edges = np.linspace(-1.0, 1.0, bins + 1)
    if mode == "linked_vs_unlinked":
        from .graph import sample_non_edges
        pos = g.edges()
        neg = sample_non_edges(g, len(pos), np.random.default_rng(seed))
        a, b = _pair_similarities(z, pos), _pair_similarities(z, neg)
        cols = ("linked_count", "unlinked_count")
    elif mode == "target_avg_before_after":
        a = np.asarray(before, dtype=np.float64)
        b = np.asarray(after, dtype=np.float64)
        cols = ("before_count", "after_count")
    else:
        raise ValueError(f"unknown similarity mode {mode!r}")
    ca, _ = np.histogram(np.clip(a, -1, 1), edges)
    cb, _ = np.histogram(np.clip(b, -1, 1), edges)
    return SimilarityHistogram(edges, ca, cb, cols, a, b)


def similarity_shift(ctx: AttackContext, results) -> tuple[list, list]:
    """Per-success average neighbor similarity before and after the attack."""
    before, after = [], []
    for r in results:
        if not r.success or "trivial" in r.flags:
            continue
        t = int(np.atleast_1d(r.target)[0])
        z2 = ctx.extractor(r.adversarial)
        b = average_neighbor_similarity(ctx.embedding, ctx.graph, t)
        a = average_neighbor_similarity(z2, r.adversarial, t)
        if b is None or a is None:
            continue
        before.append(b)
        after.append(a)
    return before, after


# ------------------------------------------------------------ pool

_WORKER_CTX = None


def _init_worker(ctx):
    global _WORKER_CTX
    _WORKER_CTX = ctx


def _run_one(task: AttackTask):
    return run_attack(task, _WORKER_CTX)


def run_tasks(ctx: AttackContext, tasks: list, jobs: int = 1) -> list:
    """Attack every task; results come back in task order regardless of ``jobs``."""
    if jobs <= 1 or len(tasks) <= 1:
        return [run_attack(t, ctx) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs, initializer=_init_worker, initargs=(ctx,)) as ex:
        return list(ex.map(_run_one, tasks))


def target_seed(seed: int, target) -> int:
    ent = [int(seed)] + [int(t) for t in np.atleast_1d(target)]
    return int(np.random.SeedSequence(ent).generate_state(1)[0])


def reverify(ctx: AttackContext, result: AttackResult, cset: ConstraintSet) -> AttackResult:
    """Independent post-hoc check of a claimed success on the spliced graph."""
    if not result.success or "trivial" in result.flags:
        return result
    if ctx.task == "graph":
        parent = ctx.graph_set.graphs[result.target]
        pred = int(predict_graph_confidence(ctx.model, result.adversarial).labels[0])
        report = check_constraints(parent, result.adversarial, cset)
    else:
        parent = ctx.graph
        pred = ctx.predict(result.adversarial, result.target)
        report = check_constraints(parent, result.adversarial, cset,
                                   ctx.extractor if cset.smr_threshold is not None else None,
                                   np.atleast_1d(result.target), ctx.embedding)
    if pred == result.y or not report.passed:
        result.success = False
        result.flags.append("reverify_failed")
    result.report = report
    return result


# ------------------------------------------------------------ defense

@dataclass
class DefenseRow:
    method: str
    clean_asr: float
    retrained_asr: float
    examples_used: int
    attacked_after: int
    excluded_after: int
    flags: list = field(default_factory=list)

    def to_dict(self):
        return dict(self.__dict__)


@dataclass
class DefenseReport:
    rows: list
    clean_accuracy: float
    retrained_accuracy: dict

    def to_dict(self):
        return {"rows": [r.to_dict() for r in self.rows], "clean_accuracy": self.clean_accuracy,
                "retrained_accuracy": self.retrained_accuracy}


def retrain_with_adversarial(g: Graph, split: LabeledSplit, adversarial: list,
                             cfg: TrainConfig) -> NodeClassifier:
    """GCN trained on clean train nodes plus (graph, node, label) adversarial terms.

    Every clean training node and every adversarial example contributes one
    equally weighted cross-entropy term to a pooled mean.
    """
    from .graph import normalize_adjacency
    rng = np.random.default_rng(cfg.seed)
    model = init_node_classifier(g.num_attributes, cfg.hidden, g.num_classes, rng)
    a_clean = normalize_adjacency(g, dense=False)
    # each adversarial term only reads the target's 2-hop rows
    adv_views = [(target_view(normalize_adjacency(ag, dense=False), ag.attributes, int(t)),
                  int(y)) for ag, t, y in adversarial]
    n_terms = len(split.train) + len(adv_views)
    y_train = g.node_labels[split.train]
    opt = AdamState(learning_rate=cfg.lr)
    best = (np.inf, {k: v.copy() for k, v in model.params.items()})
    stall = 0
    w_clean = np.full(len(split.train), 1.0 / n_terms)
    for epoch in range(cfg.epochs):
        loss, grads = node_loss_and_grads(model, a_clean, g.attributes, split.train, y_train,
                                          cfg.weight_decay, weights=w_clean)
        for view, y in adv_views:
            l_adv, g_adv = node_target_loss_and_grads(model, view, y, 1.0 / n_terms)
            loss += l_adv
            for k in grads:
                grads[k] = grads[k] + g_adv[k]
        adam_step(model.params, grads, opt)
        if len(split.validation):
            val_loss, _ = node_loss_and_grads(model, a_clean, g.attributes, split.validation,
                                              g.node_labels[split.validation])
            if val_loss < best[0] - 1e-9:
                best = (val_loss, {k: v.copy() for k, v in model.params.items()})
                stall = 0
            else:
                stall += 1
                if cfg.patience and stall >= cfg.patience:
                    break
    if len(split.validation):
        model.params = best[1]
    return model


def adversarial_training(g: Graph, split: LabeledSplit, model: NodeClassifier, methods: dict,
                         targets: list, labels: list, n_per_target: int = 10,
                         cfg: TrainConfig | None = None, seed: int = 0) -> DefenseReport:
    """Retrain with adversarial examples per method, then re-attack with fresh seeds.

    ``methods`` maps a name to ``attack(ctx, target, y, seed) -> AttackResult``.
    Targets the retrained model misclassifies on the clean graph are left out
    of the post-defense denominator.
    """
    cfg = cfg or TrainConfig()
    ctx = AttackContext("node", model, g)
    clean_acc = accuracy(ctx.probs.argmax(1)[split.test], g.node_labels[split.test])
    rows, retrained_acc = [], {}
    for name, attack in methods.items():
        clean = [attack(ctx, t, y, target_seed(seed, t)) for t, y in zip(targets, labels)]
        clean_asr = float(np.mean([r.success for r in clean])) if clean else float("nan")
        examples, flags = [], []
        for t, y in zip(targets, labels):
            made = 0
            for k in range(n_per_target):
                r = attack(ctx, t, y, target_seed(seed + 1000 + k, t))
                if r.mispredicted:
                    examples.append((r.adversarial, t, y))
                    made += 1
            if made < n_per_target:
                flags.append(f"examples_short:{t}:{n_per_target - made}")
        log.info("%s: clean ASR %.3f, %d adversarial examples", name, clean_asr, len(examples))
        defended = retrain_with_adversarial(g, split, examples, cfg)
        dctx = AttackContext("node", defended, g)
        retrained_acc[name] = accuracy(dctx.probs.argmax(1)[split.test],
                                       g.node_labels[split.test])
        after, excluded = [], 0
        for t, y in zip(targets, labels):
            if dctx.clean_prediction(t) != y:
                excluded += 1
                continue
            after.append(attack(dctx, t, y, target_seed(seed + 5000, t)))
        post = float(np.mean([r.success for r in after])) if after else float("nan")
        log.info("%s: retrained ASR %.3f over %d targets", name, post, len(after))
        rows.append(DefenseRow(name, clean_asr, post, len(examples), len(after), excluded, flags))
    return DefenseReport(rows, clean_acc, retrained_acc)


# ------------------------------------------------------------ experiments

@dataclass
class PreparedData:
    task: str
    data: object                 # Graph (node), observed Graph (link) or GraphSet
    split: LabeledSplit | None
    link_samples: dict | None = None
    full_graph: Graph | None = None


def prepare_data(task: str, data, ratios, seed: int) -> PreparedData:
    rng = np.random.default_rng(seed)
    if task == "node":
        return PreparedData(task, data, random_split(np.arange(data.n), ratios, rng))
    if task == "graph":
        return PreparedData(task, data, random_split(np.arange(len(data)), ratios, rng))
    observed, samples = split_links(data, ratios, rng)
    return PreparedData(task, observed, None, samples, data)


def train_target(prep: PreparedData, cfg: TrainConfig):
    if prep.task == "node":
        return train_node_classifier(prep.data, prep.split, cfg)
    if prep.task == "graph":
        return train_graph_classifier(prep.data, prep.split, cfg)
    return train_link_predictor(prep.data, prep.link_samples["train"], cfg,
                                validation=prep.link_samples["validation"])


def clean_quality(prep: PreparedData, model) -> dict:
    if prep.task == "node":
        ctx = AttackContext("node", model, prep.data)
        pred = ctx.probs.argmax(1)
        return {"test_accuracy": accuracy(pred[prep.split.test],
                                          prep.data.node_labels[prep.split.test])}
    if prep.task == "graph":
        graphs = [prep.data.graphs[i] for i in prep.split.test]
        pred = predict_graph_labels(model, graphs)
        return {"test_accuracy": accuracy(pred, prep.data.graph_labels[prep.split.test])}
    from .models import link_auc
    return {"test_auc": link_auc(model, prep.data, prep.link_samples["test"])}


def candidate_targets(prep: PreparedData, model, ctx: AttackContext):
    """(candidates, predicted, truth, num_classes) over the test part."""
    if prep.task == "node":
        ids = list(map(int, prep.split.test))
        return ids, ctx.probs.argmax(1)[ids], prep.data.node_labels[ids], prep.data.num_classes
    if prep.task == "graph":
        ids = list(map(int, prep.split.test))
        pred = predict_graph_labels(model, [prep.data.graphs[i] for i in ids])
        return ids, pred, prep.data.graph_labels[ids], prep.data.num_classes
    test = prep.link_samples["test"]
    pairs = np.vstack([test.positives, test.negatives])
    truth = np.r_[np.ones(len(test.positives), dtype=int), np.zeros(len(test.negatives), dtype=int)]
    pred = (link_scores(model, prep.data, pairs, ctx.a_hat, ctx.xw) > 0.5).astype(int)
    return [tuple(map(int, p)) for p in pairs], pred, truth, 2


def build_tasks(cfg, ctx: AttackContext, selection: TargetSelection) -> list:
    from .attacker import AttackTask
    tasks = []
    cset = cfg.constraints()
    for t, y in zip(selection.targets, selection.labels):
        if ctx.task == "node":
            y_tar = select_target_label(ctx.probs[t], y)
        elif ctx.task == "graph":
            conf = predict_graph_confidence(ctx.model, ctx.graph_set.graphs[t]).probabilities[0]
            y_tar = select_target_label(conf, y)
        else:
            y_tar = 1 - y
        tasks.append(AttackTask(ctx.task, t, y, y_tar, cfg.strategy, cfg.resolved_scale, cfg.K, cfg.k,
                                cset, target_seed(cfg.seed, t), cfg.examples_per_target,
                                cfg.max_epochs, cfg.warmup_epochs, cfg.k_sd, cfg.k_mag, cfg.k_ad,
                                cfg.lr, cfg.hidden_sd, cfg.ad_mode, cfg.resolved_augmentation(),
                                generator_loss=cfg.generator_loss, project_budget=cfg.project_budget))
    return tasks


def run_experiment(cfg, data, model=None, write: bool = True, data_seed: int | None = None) -> dict:
    """Train (or reuse) the target, attack selected targets, aggregate and write reports.

    ``data_seed`` fixes the split (it must match the seed the model was
    trained under); it defaults to the experiment seed.
    """
    t0 = time.time()
    manifest = []
    prep = prepare_data(cfg.task, data, cfg.split_ratios,
                        cfg.seed if data_seed is None else data_seed)
    tcfg = TrainConfig(epochs=cfg.target_epochs, lr=cfg.target_lr, hidden=cfg.hidden,
                       seed=cfg.seed, embedding_dim=cfg.embedding_dim)
    if model is None:
        model = train_target(prep, tcfg)
    quality = clean_quality(prep, model)
    ctx = AttackContext(cfg.task, model, prep.data)
    cands, pred, truth, n_cls = candidate_targets(prep, model, ctx)
    selection = select_targets(pred, truth, cands, cfg.per_class, cfg.seed, n_cls)
    if cfg.max_targets is not None:
        selection = TargetSelection(selection.targets[:cfg.max_targets],
                                    selection.labels[:cfg.max_targets], selection.shortfall)
    if selection.shortfall:
        manifest.append({"stage": "select_targets", "shortfall": selection.shortfall})
    tasks = build_tasks(cfg, ctx, selection)
    results = []
    try:
        results = run_tasks(ctx, tasks, cfg.resolved_jobs())
    except Exception as exc:  # partial report with the error recorded
        manifest.append({"stage": "attack", "error": repr(exc)})
    cset = cfg.constraints()
    results = [reverify(ctx, r, cset) for r in results]
    records = [r.to_record() for r in results]
    if cfg.task == "node":
        for rec, r in zip(records, results):
            rec["sim_before"], rec["sim_after"] = _avg_similarity_pair(ctx, r)
    metrics = metric_report(records).to_dict() if records else {}
    report = {"config": cfg.to_dict(), "clean": quality, "metrics": metrics,
              "records": records, "errors": manifest, "elapsed_seconds": time.time() - t0}
    if write:
        write_report(report, cfg.out)
    report["_results"] = results
    report["_context"] = ctx
    return report


def _avg_similarity_pair(ctx: AttackContext, r: AttackResult):
    if not r.success or "trivial" in r.flags:
        return None, None
    t = int(r.target)
    b = average_neighbor_similarity(ctx.embedding, ctx.graph, t)
    a = average_neighbor_similarity(ctx.extractor(r.adversarial), r.adversarial, t)
    return b, a


def multi_strategy_attack(ctx: AttackContext, target, y: int, seed: int, base: dict,
                          combos=(("structure", "direct"), ("hybrid", "direct"),
                                  ("structure", "unlimited"))) -> AttackResult:
    """Try several strategy/scale combinations until one succeeds."""
    last = None
    y_tar = select_target_label(ctx.probs[target], y)
    for k, (strategy, scale) in enumerate(combos):
        task = AttackTask("node", target, y, y_tar, strategy=strategy, scale=scale,
                          seed=target_seed(seed, [k]), **base)
        last = run_attack(task, ctx)
        if last.success:
            return last
    return last


def run_defense(cfg, data: Graph, model=None, n_per_target: int = 10,
                data_seed: int | None = None) -> DefenseReport:
    """DICE vs multi-strategy attack before and after adversarial training."""
    prep = prepare_data("node", data, cfg.split_ratios, cfg.seed if data_seed is None else data_seed)
    tcfg = TrainConfig(epochs=cfg.target_epochs, lr=cfg.target_lr, hidden=cfg.hidden, seed=cfg.seed)
    if model is None:
        model = train_target(prep, tcfg)
    ctx = AttackContext("node", model, prep.data)
    cands, pred, truth, n_cls = candidate_targets(prep, model, ctx)
    sel = select_targets(pred, truth, cands, cfg.per_class, cfg.seed, n_cls)
    targets, labels = sel.targets, sel.labels
    if cfg.max_targets is not None:
        targets, labels = targets[:cfg.max_targets], labels[:cfg.max_targets]
    cset = cfg.constraints()
    base = dict(K=cfg.K, constraints=cset, examples_per_target=cfg.examples_per_target,
                max_epochs=cfg.max_epochs, warmup_epochs=cfg.warmup_epochs, k_sd=cfg.k_sd,
                k_mag=cfg.k_mag, k_ad=cfg.k_ad, lr=cfg.lr, hidden_sd=cfg.hidden_sd,
                ad_mode=cfg.ad_mode, augmentation=cfg.resolved_augmentation(),
                generator_loss=cfg.generator_loss, project_budget=cfg.project_budget)

    def dice(c, t, y, s):
        return run_dice(c, t, y, cset, s)

    def ga(c, t, y, s):
        return multi_strategy_attack(c, t, y, s, base)

    return adversarial_training(prep.data, prep.split, model, {"DICE": dice, "GA": ga},
                                targets, labels, n_per_target, tcfg, cfg.seed)


def write_report(report: dict, out_dir) -> None:
    os.makedirs(out_dir, exist_ok=True)
    public = {k: v for k, v in report.items() if not k.startswith("_")}
    with open(os.path.join(out_dir, "report.json"), "w", encoding="utf-8") as fh:
        json.dump(public, fh, indent=2, sort_keys=True)
    write_records_csv(public["records"], os.path.join(out_dir, "records.csv"))


RECORD_COLUMNS = ("target", "success", "y", "y_tar", "predicted", "links_changed",
                  "attrs_changed", "l2_attr", "lambda_stat", "smr_value", "passed",
                  "epochs_used", "examples_used", "flags")


def write_records_csv(records, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RECORD_COLUMNS)
        for r in records:
            row = []
            for c in RECORD_COLUMNS:
                v = r.get(c)
                if isinstance(v, list):
                    v = ";".join(map(str, v)) if c == "flags" else "-".join(map(str, v))
                row.append("" if v is None else v)
            w.writerow(row)
