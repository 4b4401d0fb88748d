"""Synthetic graphs used as fixtures and as offline stand-ins for benchmarks."""
from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

from .graph import Graph, GraphSet, graph_from_edges


def two_cluster_graph(n: int = 20, p_in: float = 0.5, p_out: float = 0.05, d_attr: int = 8,
                      seed: int = 0) -> Graph:
    """Two equal communities; attributes are noisy class indicators."""
    rng = np.random.default_rng(seed)
    labels = np.repeat([0, 1], [n // 2, n - n // 2])
    same = labels[:, None] == labels[None, :]
    prob = np.where(same, p_in, p_out)
    upper = np.triu(rng.random((n, n)) < prob, 1)
    edges = np.argwhere(upper)
    half = d_attr // 2
    x = np.zeros((n, d_attr))
    for i, y in enumerate(labels):
        cols = np.arange(half) + (half if y else 0)
        x[i, cols] = rng.random(half) < 0.6
        noise = rng.random(d_attr) < 0.05
        x[i, noise] = 1.0
    return graph_from_edges(n, edges, x, labels, "binary")


def citation_like_graph(n: int = 600, num_classes: int = 4, d_attr: int = 200,
                        avg_degree: float = 4.0, homophily: float = 0.8,
                        attr_density: float = 0.02, attr_signal: float = 0.06,
                        powerlaw: float = 2.5, seed: int = 0) -> Graph:
    """Degree-corrected SBM with sparse binary bag-of-words style attributes.

    Node propensities follow a Pareto law so the degree sequence has a heavy
    tail, which keeps the power-law degree statistic meaningful.
    """
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, num_classes, size=n)
    theta = rng.pareto(powerlaw - 1.0, size=n) + 1.0
    theta = np.minimum(theta, np.sqrt(n))
    m = int(round(avg_degree * n / 2))
    p_node = theta / theta.sum()
    edges = set()
    by_class = [np.flatnonzero(labels == c) for c in range(num_classes)]
    p_class = [p_node[idx] / p_node[idx].sum() for idx in by_class]
    while len(edges) < m:
        u = int(rng.choice(n, p=p_node))
        if rng.random() < homophily:
            c = labels[u]
            v = int(rng.choice(by_class[c], p=p_class[c]))
        else:
            v = int(rng.choice(n, p=p_node))
        if u != v:
            edges.add((min(u, v), max(u, v)))
    # words: each class owns a block of vocabulary it uses more often
    block = d_attr // num_classes
    x = (rng.random((n, d_attr)) < attr_density).astype(np.float64)
    for i, y in enumerate(labels):
        cols = np.arange(y * block, (y + 1) * block)
        x[i, cols] = np.maximum(x[i, cols], rng.random(block) < attr_signal)
    return graph_from_edges(n, np.array(sorted(edges)), x, labels, "binary")


def density_graph_set(n_graphs: int = 400, p_sparse: float = 0.1, p_dense: float = 0.3,
                      n_range=(15, 25), num_categories: int = 6, seed: int = 0) -> GraphSet:
    """Two-class set of Erdős–Rényi graphs told apart by edge density.

    Node attributes are one-hot node categories drawn uniformly.
    """
    rng = np.random.default_rng(seed)
    graphs, labels = [], []
    for k in range(n_graphs):
        y = k % 2
        n = int(rng.integers(n_range[0], n_range[1] + 1))
        p = p_dense if y else p_sparse
        upper = np.triu(rng.random((n, n)) < p, 1)
        cats = rng.integers(0, num_categories, size=n)
        x = np.eye(num_categories)[cats]
        graphs.append(graph_from_edges(n, np.argwhere(upper), x, None, "binary"))
        labels.append(y)
    order = rng.permutation(n_graphs)
    return GraphSet([graphs[i] for i in order], np.array(labels)[order], 2)


def two_block_graph(n: int = 1500, avg_degree: float = 4.0, cross_fraction: float = 0.02,
                    seed: int = 0) -> Graph:
    """Featureless two-block graph for link prediction (identity attributes).

    Each block is a random geometric graph on the unit square, which gives
    the strong local clustering of co-authorship networks; a small fraction
    of uniformly random cross-block links joins the blocks.
    """
    rng = np.random.default_rng(seed)
    labels = np.repeat([0, 1], [n // 2, n - n // 2])
    pts = rng.random((n, 2))
    radius = np.sqrt(avg_degree / (np.pi * (n / 2)))
    edges = set()
    for c in (0, 1):
        idx = np.flatnonzero(labels == c)
        for i, j in cKDTree(pts[idx]).query_pairs(radius):
            u, v = idx[i], idx[j]
            edges.add((min(u, v), max(u, v)))
    m = int(round(cross_fraction * len(edges)))
    left = rng.choice(np.flatnonzero(labels == 0), m)
    right = rng.choice(np.flatnonzero(labels == 1), m)
    edges |= {(int(u), int(v)) for u, v in zip(left, right)}
    return graph_from_edges(n, np.array(sorted(edges)), np.eye(n), labels, "binary")
