import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from ganattack.attacker import (AdHandle, AdMode, AttackContext, AttackTask, GanState, Scale,
                                Strategy, apply_scale_mask, build_state, copy_task, discretize,
                                generate_candidate, mag_ad_loss_and_grads, mag_forward,
                                mag_sd_loss_and_grads, ad_loss_and_grads, run_attack,
                                scale_masks, sd_forward, sd_input_grad_for_generator,
                                sd_loss_and_grads, select_target_label, train_ad_step,
                                train_mag_ad_step, train_mag_sd_step, train_sd_step, init_sd)
from ganattack.graph import Augmentation, bfs_hops, random_split
from ganattack.models import TrainConfig, init_node_classifier, train_node_classifier
from ganattack.numerics import finite_difference_check
from ganattack.stealth import ConstraintSet, perturbation_delta
from ganattack.synthetic import two_cluster_graph

from conftest import random_graph

TOL = 1e-4


@pytest.fixture(scope="module")
def toy():
    g = two_cluster_graph(20, seed=0)
    split = random_split(np.arange(20), (0.5, 0.25, 0.25), np.random.default_rng(0))
    m = train_node_classifier(g, split, TrainConfig(seed=0))
    return g, m, AttackContext("node", m, g)


def _task(ctx, target, **kw):
    y = ctx.clean_prediction(target)
    kw.setdefault("augmentation", Augmentation.NONE)
    return AttackTask("node", target, y, 1 - y, **kw)


def _small_state(strategy, seed, scale="unlimited", ad_mode="frozen_target", kind="binary"):
    """A random ≤ 8-node instance with an untrained 2-class model."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(4, 9))
    g = random_graph(n, 0.5, rng, d=5, labels=rng.integers(0, 2, n), kind=kind)
    m = init_node_classifier(5, 6, 2, rng)
    ctx = AttackContext("node", m, g)
    y = ctx.clean_prediction(0)
    task = AttackTask("node", 0, y, 1 - y, strategy=strategy, scale=scale, K=n,
                      augmentation=Augmentation.NONE, ad_mode=ad_mode)
    return build_state(task, ctx, rng), task


# ------------------------------------------------------------ primitives

def test_discretize_examples():
    m = np.array([[0.51, 0.49], [0.5, 1.0]])
    assert discretize(m).tolist() == [[1.0, 0.0], [0.0, 1.0]]
    assert discretize(m, adjacency=True).tolist() == [[0.0, 0.0], [0.0, 0.0]]


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 8), st.integers(0, 10_000))
def test_discretize_idempotent(n, seed):
    m = np.random.default_rng(seed).random((n, n))
    once = discretize(m, adjacency=True)
    assert np.array_equal(discretize(once, adjacency=True), once)


def test_select_target_label_examples():
    assert select_target_label([0.7, 0.2, 0.1], 0) == 1
    assert select_target_label([0.7, 0.2, 0.1], 0, override=2) == 2
    assert select_target_label([0.6, 0.2, 0.2], 0) == 1
    with pytest.raises(ValueError):
        select_target_label([1.0], 0)
    with pytest.raises(ValueError):
        select_target_label([0.7, 0.3], 0, override=0)


def test_attack_task_forbids_same_label_and_graph_direct():
    with pytest.raises(ValueError):
        AttackTask("node", 0, 1, 1)
    with pytest.raises(ValueError):
        AttackTask("graph", 0, 0, 1, scale="direct")
    with pytest.raises(ValueError):
        AttackTask("node", 0, 0, 1, K=2, k=3)


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 8), st.integers(0, 10_000), st.sampled_from(["direct", "indirect", "unlimited"]))
def test_scale_mask_soundness_exhaustive(n, seed, scale):
    """Every forbidden entry of a masked candidate equals the original."""
    rng = np.random.default_rng(seed)
    g = random_graph(n, 0.4, rng)
    a0 = g.dense_adjacency()
    hops = bfs_hops(g.adjacency, [0])
    K = n
    k = int(rng.integers(0, K + 1))
    mask, rows = scale_masks(n, hops, [0], scale, k, K)
    cand = discretize(rng.random((n, n)), adjacency=True)
    cand = np.triu(cand, 1) + np.triu(cand, 1).T
    out = apply_scale_mask(a0, cand, mask)
    assert np.array_equal(out, out.T) and not np.diag(out).any()
    h = np.where(hops < 0, K, hops)
    for i in range(n):
        for j in range(n):
            if i == j or out[i, j] == a0[i, j]:
                continue
            if scale == "direct":
                assert 0 in (i, j)
            elif scale == "indirect":
                assert 0 not in (i, j) and h[i] <= k and h[j] <= k
            else:
                assert h[i] <= k and h[j] <= k
    if scale == "unlimited" and k == K:
        assert np.array_equal(out, cand)


def test_wex_zero_gives_one_half():
    state, _ = _small_state(Strategy.STRUCTURE, 0)
    state.mag.params["WexA"][:] = 0.0
    out = mag_forward(state)
    ac = out.cache["ac"]
    assert np.allclose(ac, 0.5)
    assert np.array_equal(out.a_in, out.a_in.T)


@pytest.mark.parametrize("strategy", list(Strategy))
def test_generated_adjacency_symmetric(strategy):
    state, _ = _small_state(strategy, 1)
    out = mag_forward(state)
    assert np.array_equal(out.a_in, out.a_in.T)
    a, x = generate_candidate(state)
    assert np.array_equal(a, a.T) and not np.diag(a).any()
    if strategy is Strategy.STRUCTURE:
        assert np.array_equal(x, state.x0) and np.array_equal(out.x_in, state.x0)
    if strategy is Strategy.ATTRIBUTE:
        assert np.array_equal(a, state.a0)


# ------------------------------------------------------------ SD

def test_sd_zero_weights_one_half_and_loss():
    sd = init_sd(6, 4, "structure", np.random.default_rng(0))
    for v in sd.params.values():
        v[:] = 0.0
    h = np.ones(6)
    assert sd_forward(sd, h) == 0.5
    loss, _ = sd_loss_and_grads(sd, h, h)
    assert loss == pytest.approx(2 * np.log(2))
    _, dh = sd_input_grad_for_generator(sd, h)
    assert not dh.any()
    with pytest.raises(ValueError):
        sd_forward(sd, np.ones(5))


@settings(max_examples=15, deadline=None)
@given(st.integers(1, 12), st.integers(0, 10_000))
def test_sd_parameter_gradient(n_in, seed):
    rng = np.random.default_rng(seed)
    sd = init_sd(n_in, 5, "structure", rng)
    real, fake = rng.random(n_in), rng.random(n_in)
    _, grads = sd_loss_and_grads(sd, real, fake)
    rep = finite_difference_check(lambda: sd_loss_and_grads(sd, real, fake)[0], sd.params, grads)
    assert rep.ok(TOL), rep.per_param


@pytest.mark.parametrize("loss", ["minimax", "nonsaturating"])
def test_sd_input_gradient(loss):
    rng = np.random.default_rng(3)
    sd = init_sd(7, 5, "structure", rng)
    h = {"h": rng.random(7)}
    _, dh = sd_input_grad_for_generator(sd, h["h"], loss)
    rep = finite_difference_check(lambda: sd_input_grad_for_generator(sd, h["h"], loss)[0],
                                  h, {"h": dh})
    assert rep.ok(TOL)


def test_sd_separates_after_training():
    state, task = _small_state(Strategy.STRUCTURE, 2)
    for _ in range(10):
        train_sd_step(state)
    out = mag_forward(state)
    sd = state.sds["structure"]
    iu = state.upper_idx
    assert sd_forward(sd, state.a0[iu]) > sd_forward(sd, out.a_in[iu])


# ------------------------------------------------------------ MAG gradients

@pytest.mark.parametrize("strategy", list(Strategy))
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_mag_sd_gradient(strategy, seed):
    state, _ = _small_state(strategy, seed)
    _, grads = mag_sd_loss_and_grads(state)
    rep = finite_difference_check(lambda: mag_sd_loss_and_grads(state)[0], state.mag.params, grads)
    assert rep.ok(TOL), rep.per_param


@pytest.mark.parametrize("strategy", list(Strategy))
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_mag_ad_gradient(strategy, seed):
    state, _ = _small_state(strategy, seed)
    _, grads = mag_ad_loss_and_grads(state)
    rep = finite_difference_check(lambda: mag_ad_loss_and_grads(state)[0], state.mag.params, grads)
    assert rep.ok(TOL), rep.per_param


def test_mag_ad_gradient_continuous_attributes():
    state, _ = _small_state(Strategy.ATTRIBUTE, 4, kind="continuous")
    _, grads = mag_ad_loss_and_grads(state)
    rep = finite_difference_check(lambda: mag_ad_loss_and_grads(state)[0], state.mag.params, grads)
    assert rep.ok(TOL), rep.per_param


@pytest.mark.parametrize("seed", [0, 1])
def test_surrogate_ad_gradient(seed):
    state, _ = _small_state(Strategy.STRUCTURE, seed, ad_mode="trainable_surrogate")
    fake = mag_forward(state)
    _, grads = ad_loss_and_grads(state, fake)
    rep = finite_difference_check(lambda: ad_loss_and_grads(state, fake)[0],
                                  state.ad.model.params, grads)
    assert rep.ok(TOL), rep.per_param


def test_zero_sd_gives_zero_mag_gradient():
    state, _ = _small_state(Strategy.STRUCTURE, 0)
    for v in state.sds["structure"].params.values():
        v[:] = 0.0
    _, grads = mag_sd_loss_and_grads(state)
    assert all(not g.any() for g in grads.values())


# ------------------------------------------------------------ training dynamics

def test_mag_sd_steps_raise_sd_score():
    state, _ = _small_state(Strategy.STRUCTURE, 5)
    for _ in range(5):
        train_sd_step(state)
    sd = state.sds["structure"]
    iu = state.upper_idx
    before = sd_forward(sd, mag_forward(state).a_in[iu])
    losses = [train_mag_sd_step(state) for _ in range(10)]
    assert losses[-1] < losses[0]
    assert sd_forward(sd, mag_forward(state).a_in[iu]) > before


def test_mag_ad_steps_raise_target_confidence():
    state, _ = _small_state(Strategy.STRUCTURE, 6)
    losses = [train_mag_ad_step(state) for _ in range(10)]
    assert losses[-1] < losses[0]


def test_frozen_ad_is_untouched():
    state, _ = _small_state(Strategy.STRUCTURE, 0)
    before = {k: v.copy() for k, v in state.ad.model.params.items()}
    assert train_ad_step(state) is None
    assert all(np.array_equal(before[k], v) for k, v in state.ad.model.params.items())


def test_surrogate_ad_step_raises_real_confidence():
    state, _ = _small_state(Strategy.STRUCTURE, 7, ad_mode="trainable_surrogate")
    fake = mag_forward(state)
    first = ad_loss_and_grads(state, fake)[0]
    for _ in range(10):
        train_ad_step(state, fake)
    assert ad_loss_and_grads(state, fake)[0] < first


# ------------------------------------------------------------ budget projection

def test_projection_respects_cap():
    state, _ = _small_state(Strategy.HYBRID, 3)
    state.mag.params["WexA"][:] = 5.0  # every editable pair becomes a link
    state.link_cap, state.attr_cap, state.joint_cap = 2, 2, True
    a, x = generate_candidate(state)
    iu = np.triu_indices(len(a), 1)
    flips = int((a[iu] != state.a0[iu]).sum() + (x != state.x0).sum())
    assert flips <= 2
    state.joint_cap = False
    a, x = generate_candidate(state)
    assert (a[iu] != state.a0[iu]).sum() <= 2 and (x != state.x0).sum() <= 2


# ------------------------------------------------------------ end to end

def test_trivial_success_for_misclassified_target(toy):
    g, m, ctx = toy
    y = ctx.clean_prediction(0)
    task = AttackTask("node", 0, 1 - y, y)  # claims the model is wrong
    r = run_attack(task, ctx)
    assert r.success and "trivial" in r.flags
    assert (r.report.links_changed, r.report.attrs_changed) == (0, 0)


def test_direct_structure_attack_on_two_clusters(toy):
    g, m, ctx = toy
    # brute-force oracle: some single target-incident flip changes the label
    a0 = g.dense_adjacency()
    y0 = ctx.clean_prediction(0)
    single = []
    for j in range(1, g.n):
        a = a0.copy()
        a[0, j] = a[j, 0] = 1 - a[0, j]
        single.append(ctx.predict(g.replace(adjacency=sp.csr_matrix(a)), 0) != y0)
    assert any(single)
    task = _task(ctx, 0, constraints=ConstraintSet(0.12), examples_per_target=5, max_epochs=20)
    r = run_attack(task, ctx)
    assert r.success and r.report.links_changed <= 5
    assert ctx.predict(r.adversarial, 0) != task.y
    links, attrs = perturbation_delta(g, r.adversarial)
    assert attrs == 0 and links == r.report.links_changed
    # direct scale: every flipped link touches the target
    assert all(0 in pair for pair in r.flipped_links)


def test_attack_replay_is_bit_identical(toy):
    g, m, ctx = toy
    task = _task(ctx, 3, examples_per_target=2, max_epochs=8, seed=11,
                 augmentation=Augmentation.RANDOM_OTHER_CLASS)
    a, b = run_attack(task, ctx), run_attack(copy_task(task), ctx)
    assert a.to_record() == b.to_record()
    assert (a.adversarial.adjacency != b.adversarial.adjacency).nnz == 0


def test_attribute_strategy_never_changes_structure(toy):
    g, m, ctx = toy
    task = _task(ctx, 5, strategy="attribute", examples_per_target=1, max_epochs=6)
    r = run_attack(task, ctx)
    assert (r.adversarial.adjacency != g.adjacency).nnz == 0
