import os

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from ganattack.graph import (Augmentation, Graph, GraphSet, LabeledSplit, LinkSample,
                             MalformedInputError, bfs_hops, degree_sequence, graph_from_edges,
                             induced_subgraph, k_hop_subgraph, load_edge_list,
                             load_edge_list_dir, load_linqs_citation, load_tu_dataset,
                             normalize_adjacency, random_split, sample_non_edges,
                             splice_subgraph, split_links, write_edge_list)

from conftest import path_graph, random_graph, star_graph


def _write(path, text):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


# ------------------------------------------------------------ containers

def test_graph_rejects_asymmetric_adjacency():
    with pytest.raises(ValueError):
        Graph(sp.csr_matrix(np.array([[0, 1], [0, 0]])), np.eye(2))


def test_graph_rejects_self_loop_and_nonbinary_attributes():
    with pytest.raises(ValueError):
        Graph(sp.csr_matrix(np.eye(2)), np.eye(2))
    with pytest.raises(ValueError):
        Graph(sp.csr_matrix((2, 2)), np.array([[0.5], [1.0]]), "binary")


def test_graph_set_label_checks():
    g = path_graph(2)
    with pytest.raises(MalformedInputError):
        GraphSet([g, g], [0])
    with pytest.raises(MalformedInputError):
        GraphSet([g], [3], num_classes=2)


def test_split_disjoint():
    with pytest.raises(ValueError):
        LabeledSplit([0, 1], [1], [2])
    s = random_split(np.arange(100), (0.2, 0.4, 0.4), np.random.default_rng(0))
    assert (len(s.train), len(s.validation), len(s.test)) == (20, 40, 40)
    assert set(s.train) | set(s.validation) | set(s.test) == set(range(100))


def test_link_sample_invariants():
    g = path_graph(4)
    with pytest.raises(ValueError):
        LinkSample([(1, 1)], [])
    LinkSample([(0, 1)], [(0, 3)]).validate_against(g)
    with pytest.raises(ValueError):
        LinkSample([(0, 2)], []).validate_against(g)
    with pytest.raises(ValueError):
        LinkSample([], [(0, 1)]).validate_against(g)


def test_split_links_partitions_edges(rng):
    g = random_graph(40, 0.2, rng)
    observed, samples = split_links(g, (0.8, 0.1, 0.1), rng)
    pos = np.vstack([samples[k].positives for k in ("train", "validation", "test")])
    assert len(pos) == g.num_edges
    assert len({tuple(p) for p in pos.tolist()}) == g.num_edges
    assert observed.num_edges == len(samples["train"].positives)
    for s in samples.values():
        assert len(s.negatives) == len(s.positives)
        LinkSample(s.positives, s.negatives).validate_against(g)


def test_sample_non_edges_distinct(rng):
    g = random_graph(15, 0.3, rng)
    ne = sample_non_edges(g, 30, rng)
    assert len({tuple(p) for p in ne.tolist()}) == 30
    assert not any(g.adjacency[i, j] for i, j in ne)
    assert np.all(ne[:, 0] < ne[:, 1])


# ------------------------------------------------------------ loaders

def test_load_edge_list_symmetrize_dedupe(tmp_path):
    _write(tmp_path / "e.txt", "0 1\n1 0\n1 1\n")
    g = load_edge_list(tmp_path / "e.txt")
    assert g.n == 2 and g.num_edges == 1
    assert np.array_equal(g.dense_adjacency(), [[0, 1], [1, 0]])


def test_load_edge_list_identity_attributes(tmp_path):
    _write(tmp_path / "e.txt", "0 1\n1 2\n")
    g = load_edge_list(tmp_path / "e.txt")
    assert np.array_equal(g.attributes, np.eye(3))


def test_load_edge_list_errors(tmp_path):
    _write(tmp_path / "e.txt", "0 x\n")
    with pytest.raises(MalformedInputError):
        load_edge_list(tmp_path / "e.txt")
    _write(tmp_path / "e2.txt", "0 5\n")
    with pytest.raises(MalformedInputError):
        load_edge_list(tmp_path / "e2.txt", num_nodes=3)


def test_load_edge_list_sparse_attributes_and_labels(tmp_path):
    _write(tmp_path / "e.txt", "0 1\n")
    _write(tmp_path / "x.txt", "0:1 2:1\n1:1\n")
    _write(tmp_path / "y.txt", "0\n1\n")
    g = load_edge_list(tmp_path / "e.txt", tmp_path / "x.txt", tmp_path / "y.txt")
    assert g.attributes.shape == (2, 3)
    assert g.attributes[0].tolist() == [1, 0, 1]
    assert g.node_labels.tolist() == [0, 1]


def test_edge_list_round_trip(tmp_path, rng):
    g = random_graph(25, 0.2, rng, labels=rng.integers(0, 3, 25))
    write_edge_list(g, tmp_path)
    g2 = load_edge_list_dir(tmp_path)
    assert g2.equals(g)
    assert np.array_equal(g2.node_labels, g.node_labels)


def test_tu_loader_partition(tmp_path):
    _write(tmp_path / "T_A.txt", "1, 2\n2, 1\n")
    _write(tmp_path / "T_graph_indicator.txt", "1\n1\n2\n")
    _write(tmp_path / "T_graph_labels.txt", "-1\n1\n")
    _write(tmp_path / "T_node_labels.txt", "0\n2\n1\n")
    gs = load_tu_dataset(tmp_path, "T")
    assert [g.n for g in gs.graphs] == [2, 1]
    assert gs.graph_labels.tolist() == [0, 1]
    assert gs.graphs[0].num_edges == 1
    assert gs.graphs[0].attributes.shape[1] == 3  # one-hot node categories


def test_tu_loader_length_mismatch(tmp_path):
    _write(tmp_path / "T_A.txt", "1, 2\n")
    _write(tmp_path / "T_graph_indicator.txt", "1\n1\n")
    _write(tmp_path / "T_graph_labels.txt", "0\n1\n")
    with pytest.raises(MalformedInputError):
        load_tu_dataset(tmp_path, "T")


def test_linqs_loader(tmp_path):
    _write(tmp_path / "c.content", "p1\t1\t0\tA\np2\t0\t1\tB\np3\t1\t1\tA\n")
    _write(tmp_path / "c.cites", "p1\tp2\np3\tp1\np9\tp1\n")
    g = load_linqs_citation(tmp_path / "c.content", tmp_path / "c.cites")
    assert g.n == 3 and g.num_edges == 2 and g.num_attributes == 2
    assert g.node_labels.tolist() == [0, 1, 0]


@pytest.mark.skipif(not os.environ.get("GANATTACK_CORA_DIR"), reason="GANATTACK_CORA_DIR not set")
def test_cora_loader_shape():
    d = os.environ["GANATTACK_CORA_DIR"]
    g = load_linqs_citation(os.path.join(d, "cora.content"), os.path.join(d, "cora.cites"))
    assert (g.n, g.num_attributes, g.num_classes) == (2708, 1433, 7)
    # the published 5,427 sits between the unique undirected and the raw directed counts
    assert 5278 <= g.num_edges <= 5429


# ------------------------------------------------------------ normalization

def test_normalize_examples():
    single = graph_from_edges(1, [])
    assert np.allclose(normalize_adjacency(single), [[1.0]])
    assert np.allclose(normalize_adjacency(path_graph(2)), [[0.5, 0.5], [0.5, 0.5]])
    a = normalize_adjacency(path_graph(3))
    assert a[0, 1] == pytest.approx(1 / np.sqrt(6))
    assert a[1, 1] == pytest.approx(1 / 3)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 12), st.floats(0, 1), st.integers(0, 10_000))
def test_normalize_symmetric_in_unit_interval(n, p, seed):
    g = random_graph(n, p, np.random.default_rng(seed))
    a = normalize_adjacency(g)
    assert np.allclose(a, a.T)
    nz = a[g.dense_adjacency() + np.eye(n) > 0]
    assert np.all((nz > 0) & (nz <= 1 + 1e-12))
    assert np.all(np.diag(a) > 0)
    assert np.allclose(normalize_adjacency(g.adjacency, dense=False).toarray(), a)


def test_degree_sequence_examples():
    assert degree_sequence(path_graph(2)).tolist() == [1, 1]
    assert degree_sequence(graph_from_edges(3, [])).tolist() == [0, 0, 0]
    assert degree_sequence(star_graph(4)).tolist() == [4, 1, 1, 1, 1]


# ------------------------------------------------------------ subgraphs

def test_khop_examples():
    view = k_hop_subgraph(star_graph(5), [0], 1)
    assert sorted(view.parent_index.tolist()) == list(range(6))
    view = k_hop_subgraph(path_graph(5), [0], 2)
    assert sorted(view.parent_index.tolist()) == [0, 1, 2]
    assert view.target_local.tolist() == [0]
    assert view.hops.tolist() == [0, 1, 2]


def test_khop_random_other_class_adds_twenty_percent():
    # 10-node ball (path 0..9 reachable within 9 hops) plus 20 other-class nodes
    n = 30
    labels = np.array([0] * 10 + [1] * 20)
    edges = [(i, i + 1) for i in range(9)] + [(i, i + 1) for i in range(10, 29)]
    g = graph_from_edges(n, edges, None, labels)
    view = k_hop_subgraph(g, [0], 9, Augmentation.RANDOM_OTHER_CLASS,
                          rng=np.random.default_rng(0))
    assert view.n == 12
    extra = view.parent_index[10:]
    assert np.all(labels[extra] == 1)
    assert np.all(view.hops[10:] == -1)


def test_khop_high_similarity_fallback():
    g = path_graph(6)
    sims = np.zeros(6)
    view = k_hop_subgraph(g, [0], 1, Augmentation.HIGH_SIMILARITY, sim_scores=sims)
    assert view.augmentation_fallback and view.augmentation is Augmentation.NONE
    sims[5] = 0.95
    view = k_hop_subgraph(g, [0], 1, Augmentation.HIGH_SIMILARITY, sim_scores=sims)
    assert 5 in view.parent_index.tolist() and not view.augmentation_fallback


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 12), st.floats(0.05, 0.6), st.integers(1, 3), st.integers(0, 10_000))
def test_khop_restriction_matches_parent(n, p, K, seed):
    rng = np.random.default_rng(seed)
    g = random_graph(n, p, rng)
    t = int(rng.integers(0, n))
    view = k_hop_subgraph(g, [t], K)
    idx = view.parent_index
    assert len(set(idx.tolist())) == len(idx)
    assert np.array_equal(view.sub.dense_adjacency(), g.dense_adjacency()[np.ix_(idx, idx)])
    hops = bfs_hops(g.adjacency, [t])
    expected = set(np.flatnonzero((hops >= 0) & (hops <= K)).tolist())
    assert set(idx.tolist()) == expected


@settings(max_examples=40, deadline=None)
@given(st.integers(3, 12), st.integers(0, 10_000))
def test_splice_identity_and_locality(n, seed):
    rng = np.random.default_rng(seed)
    g = random_graph(n, 0.3, rng)
    view = k_hop_subgraph(g, [0], 1)
    same = splice_subgraph(g, view, view.sub)
    assert same.equals(g)
    if view.n < 2:
        return
    a = view.sub.dense_adjacency()
    a[0, 1] = a[1, 0] = 1 - a[0, 1]
    adv = view.sub.replace(adjacency=sp.csr_matrix(a))
    g2 = splice_subgraph(g, view, adv)
    diff = np.argwhere(g2.dense_adjacency() != g.dense_adjacency())
    i, j = view.parent_index[0], view.parent_index[1]
    assert sorted(map(tuple, diff.tolist())) == sorted([(i, j), (j, i)])
    assert np.array_equal(g2.attributes, g.attributes)


def test_splice_shape_mismatch(rng):
    g = random_graph(8, 0.4, rng)
    view = k_hop_subgraph(g, [0], 1)
    with pytest.raises(ValueError):
        splice_subgraph(g, view, path_graph(view.n + 1, np.zeros((view.n + 1, 4))))


def test_induced_subgraph_labels(toy_graph):
    sub = induced_subgraph(toy_graph, [0, 15])
    assert sub.node_labels.tolist() == [0, 1]
