"""Acceptance criteria, one test per criterion.

Each test prints a single ``CRITERION n PASS|FAIL|BLOCKED`` line with the
measured values. Criteria stated on Cora run on real Cora when
GANATTACK_CORA_DIR points at a LINQS ``cora`` directory and otherwise on a
Cora-shaped synthetic citation graph; the line names which one was used.
"""
import functools
import os
import subprocess
import sys
import time

import numpy as np
import pytest

from ganattack.attacker import AttackContext
from ganattack.config import ExperimentConfig
from ganattack.evaluation import (TargetSelection, asr, aml, build_tasks, prepare_data, reverify,
                                  run_defense, run_dice, run_experiment, run_tasks,
                                  select_targets, similarity_distribution, similarity_shift,
                                  target_seed, train_target)
from ganattack.graph import load_linqs_citation
from ganattack.models import TrainConfig, predict_graph_labels
from ganattack.stealth import degree_test_statistic, perturbation_delta, smr
from ganattack.synthetic import citation_like_graph, density_graph_set, two_block_graph

pytestmark = pytest.mark.slow

HERE = os.path.dirname(os.path.abspath(__file__))
N_NODE_TARGETS = 30


def _line(capsys, n, ok, detail):
    status = "PASS" if ok else "FAIL"
    with capsys.disabled():
        print(f"\nCRITERION {n} {status}: {detail}", flush=True)
    return ok


def _blocked(capsys, n, why):
    with capsys.disabled():
        print(f"\nCRITERION {n} BLOCKED: {why}", flush=True)
    pytest.skip(why)


# ------------------------------------------------------------ node-task fixtures

@functools.lru_cache(maxsize=None)
def citation_data():
    d = os.environ.get("GANATTACK_CORA_DIR")
    if d:
        g = load_linqs_citation(os.path.join(d, "cora.content"), os.path.join(d, "cora.cites"))
        return g, "Cora"
    g = citation_like_graph(n=2708, num_classes=7, d_attr=1433, avg_degree=3.9, seed=0,
                            attr_density=0.01, attr_signal=0.0125)
    return g, "Cora-shaped stand-in (Cora unavailable)"


@functools.lru_cache(maxsize=None)
def node_setup():
    g, name = citation_data()
    cfg = ExperimentConfig(task="node", seed=0)
    prep = prepare_data("node", g, cfg.split_ratios, cfg.seed)
    t0 = time.time()
    model = train_target(prep, TrainConfig(epochs=200, hidden=64, seed=0))
    seconds = time.time() - t0
    ctx = AttackContext("node", model, g)
    pred = ctx.probs.argmax(1)
    test = prep.split.test
    acc = float(np.mean(pred[test] == g.node_labels[test]))
    ids = [int(i) for i in test]
    sel = select_targets(pred[ids], g.node_labels[ids], ids, 20, seed=0,
                         num_classes=g.num_classes)
    pick = np.sort(np.random.default_rng(0).choice(len(sel.targets), N_NODE_TARGETS,
                                                   replace=False))
    selection = TargetSelection([sel.targets[k] for k in pick], [sel.labels[k] for k in pick])
    return {"graph": g, "name": name, "model": model, "ctx": ctx, "acc": acc,
            "train_seconds": seconds, "selection": selection, "prep": prep}


@functools.lru_cache(maxsize=None)
def node_attack(profile, strategy):
    s = node_setup()
    cfg = ExperimentConfig(task="node", profile=profile, strategy=strategy, scale="direct", K=3,
                           examples_per_target=20, seed=0, jobs=os.cpu_count())
    t0 = time.time()
    tasks = build_tasks(cfg, s["ctx"], s["selection"])
    results = run_tasks(s["ctx"], tasks, cfg.resolved_jobs())
    results = [reverify(s["ctx"], r, cfg.constraints()) for r in results]
    return cfg, results, time.time() - t0


# ------------------------------------------------------------ criteria

def test_criterion_01_clean_sanity(capsys):
    s = node_setup()
    ok = s["acc"] >= 0.75 and s["train_seconds"] <= 120
    assert _line(capsys, 1, ok, f"[{s['name']}] test accuracy {s['acc']:.3f} (>= 0.75), "
                                f"training {s['train_seconds']:.1f}s (<= 120s)")


def test_criterion_02_node_attack(capsys):
    s = node_setup()
    _, res, secs = node_attack("B-GA", "structure")
    a, m = asr(res), aml(res)
    ok = a >= 0.85 and m <= 10
    assert _line(capsys, 2, ok, f"[{s['name']}] B-GA structure direct K=3, {len(res)} targets: "
                                f"ASR {a:.3f} (>= 0.85), AML {m:.2f} (<= 10), {secs:.0f}s "
                                f"on {os.cpu_count()} core(s)")


def test_criterion_03_constraint_soundness(capsys):
    s = node_setup()
    cfg, res, _ = node_attack("S-GA", "structure")
    g, ctx = s["graph"], s["ctx"]
    cset = cfg.constraints()
    budget = cset.link_budget(g)
    wins = [r for r in res if r.success and "trivial" not in r.flags]
    bad = []
    for r in wins:
        links, attrs = perturbation_delta(g, r.adversarial)
        lam = degree_test_statistic(g, r.adversarial)
        val = smr(g, r.adversarial, ctx.extractor, int(r.target))
        if not (links + attrs <= budget and lam < 0.004 and val < 0.05):
            bad.append((r.target, links + attrs, lam, val))
    ok = len(wins) > 0 and not bad
    assert _line(capsys, 3, ok, f"[{s['name']}] S-GA: {len(wins)} successes re-verified, "
                                f"{len(bad)} violations (Δ={budget}, Λ<0.004, SMR<0.05); "
                                f"ASR {asr(res):.3f}")


def test_criterion_04_dice_baseline(capsys):
    s = node_setup()
    cfg, res, _ = node_attack("B-GA", "structure")
    cset = cfg.constraints()
    dice = [run_dice(s["ctx"], t, y, cset, target_seed(cfg.seed, t))
            for t, y in zip(s["selection"].targets, s["selection"].labels)]
    ga, dc = asr(res), asr(dice)
    assert _line(capsys, 4, dc < ga, f"[{s['name']}] DICE ASR {dc:.3f} < B-GA ASR {ga:.3f} "
                                     f"on the same {len(dice)} targets")


def test_criterion_05_hybrid_vs_structure(capsys):
    s = node_setup()
    _, st, _ = node_attack("B-GA", "structure")
    _, hy, secs = node_attack("B-GA", "hybrid")
    a_s, a_h = asr(st), asr(hy)
    assert _line(capsys, 5, a_h >= a_s, f"[{s['name']}] hybrid ASR {a_h:.3f} >= structure ASR "
                                         f"{a_s:.3f} (hybrid run {secs:.0f}s)")


def test_criterion_06_graph_classification(capsys):
    t0 = time.time()
    gs = density_graph_set(400, seed=0)
    cfg = ExperimentConfig(task="graph", seed=0, per_class=10, jobs=os.cpu_count())
    prep = prepare_data("graph", gs, cfg.split_ratios, cfg.seed)
    model = train_target(prep, TrainConfig(seed=0))
    test = prep.split.test
    acc = float(np.mean(predict_graph_labels(model, [gs.graphs[i] for i in test])
                        == gs.graph_labels[test]))
    rates = {}
    for r in (0.01, 0.05, 0.10, 0.20):
        c = ExperimentConfig(task="graph", seed=0, per_class=10, budget_ratio=r,
                             jobs=os.cpu_count())
        rep = run_experiment(c, gs, model, write=False)
        rates[r] = rep["metrics"]["asr"]
        n_targets = rep["metrics"]["attacked"]
    seq = [rates[r] for r in sorted(rates)]
    monotone = all(b >= a - 0.05 for a, b in zip(seq, seq[1:]))
    ok = acc >= 0.9 and rates[0.10] >= 0.5 and monotone and n_targets == 20
    secs = time.time() - t0
    assert _line(capsys, 6, ok and secs <= 1800,
                 f"density set: accuracy {acc:.3f} (>= 0.9); {n_targets} targets; ASR by r "
                 + ", ".join(f"{r:.2f}:{a:.2f}" for r, a in sorted(rates.items()))
                 + f" (r=0.10 >= 0.5, non-decreasing within 0.05); {secs:.0f}s")


def test_criterion_07_link_prediction(capsys):
    t0 = time.time()
    g = two_block_graph(seed=0)
    cfg = ExperimentConfig(task="link", scale="unlimited", per_class=10, seed=0,
                           jobs=os.cpu_count())
    rep = run_experiment(cfg, g, write=False)
    ctx, res = rep["_context"], rep["_results"]
    dice = [run_dice(ctx, r.target, r.y, cfg.constraints(), target_seed(cfg.seed, r.target))
            for r in res]
    ga, dc = asr(res), asr(dice)
    secs = time.time() - t0
    assert _line(capsys, 7, ga > dc and len(res) == 20 and secs <= 1800,
                 f"two-block stand-in ({g.n} nodes, {g.num_edges} edges, clean AUC "
                 f"{rep['clean']['test_auc']:.3f}): GA unlimited ASR {ga:.3f} > DICE ASR {dc:.3f} "
                 f"on {len(res)} targets; {secs:.0f}s")


def test_criterion_08_similarity(capsys):
    s = node_setup()
    h = similarity_distribution(s["graph"], s["ctx"].embedding, seed=0)
    mass = h.fraction_above(0.8)
    shifts = {}
    for prof in ("S-GA", "D-GA"):
        _, res, _ = node_attack(prof, "structure")
        before, after = similarity_shift(s["ctx"], res)
        shifts[prof] = (float(np.mean(np.abs(np.subtract(before, after)))) if before
                        else float("nan"), len(before))
    ok = mass >= 0.85 and shifts["S-GA"][0] < shifts["D-GA"][0]
    assert _line(capsys, 8, ok, f"[{s['name']}] linked-pair mass above 0.8: {mass:.3f} (>= 0.85); "
                                f"mean |shift| S-GA {shifts['S-GA'][0]:.4f} ({shifts['S-GA'][1]} "
                                f"successes) < D-GA {shifts['D-GA'][0]:.4f} "
                                f"({shifts['D-GA'][1]} successes)")


def test_criterion_09_defense(capsys):
    s = node_setup()
    t0 = time.time()
    cfg = ExperimentConfig(task="node", per_class=2, seed=0)
    rep = run_defense(cfg, s["graph"], s["model"], n_per_target=10, data_seed=0)
    rows = {r.method: r for r in rep.rows}
    d, ga = rows["DICE"], rows["GA"]
    drop = d.clean_asr - d.retrained_asr
    secs = time.time() - t0
    ok = drop >= 0.10 and ga.retrained_asr > d.retrained_asr and secs <= 5400
    assert _line(capsys, 9, ok, f"[{s['name']}] DICE ASR {d.clean_asr:.3f} -> {d.retrained_asr:.3f} "
                                f"(drop {drop:.3f} >= 0.10); GA ASR {ga.clean_asr:.3f} -> "
                                f"{ga.retrained_asr:.3f} (> DICE after defense); clean accuracy "
                                f"{rep.clean_accuracy:.3f}, retrained "
                                + ", ".join(f"{k} {v:.3f}" for k, v in rep.retrained_accuracy.items())
                                + f"; {secs:.0f}s")


def test_criterion_10_property_suite(capsys):
    files = ["test_numerics.py", "test_models.py", "test_attacker.py", "test_stealth.py",
             "test_graph.py"]
    t0 = time.time()
    proc = subprocess.run([sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider"]
                          + [os.path.join(HERE, f) for f in files],
                          capture_output=True, text=True, cwd=os.path.dirname(HERE))
    secs = time.time() - t0
    tail = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr[-200:]
    ok = proc.returncode == 0 and secs < 60
    assert _line(capsys, 10, ok, f"gradient/property suite: {tail} in {secs:.1f}s (< 60s)")
