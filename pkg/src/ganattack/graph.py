"""Graph containers, dataset readers, normalization and K-hop subgraphs."""
from __future__ import annotations

import math
import os
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import scipy.sparse as sp


class MalformedInputError(ValueError):
    """Raised when a dataset file does not match its expected layout."""


class Augmentation(str, Enum):
    NONE = "none"
    RANDOM_OTHER_CLASS = "random_other_class"
    HIGH_SIMILARITY = "high_similarity"


def _as_adjacency(adj) -> sp.csr_matrix:
    a = sp.csr_matrix(adj, dtype=np.float64)
    a.eliminate_zeros()
    a.sort_indices()
    return a


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected simple graph with node attributes.

    ``adjacency`` is kept as a CSR matrix of ones; dense views are built on
    demand by callers that work at subgraph scale.
    """

    adjacency: sp.csr_matrix
    attributes: np.ndarray
    attribute_kind: str = "binary"
    node_labels: np.ndarray | None = None
    check: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "adjacency", _as_adjacency(self.adjacency))
        attrs = np.asarray(self.attributes, dtype=np.float64)
        if attrs.ndim == 1:
            attrs = attrs[:, None]
        object.__setattr__(self, "attributes", attrs)
        if self.node_labels is not None:
            object.__setattr__(self, "node_labels", np.asarray(self.node_labels, dtype=np.int64))
        if self.check:
            self.validate()

    def validate(self) -> None:
        a = self.adjacency
        n = a.shape[0]
        if a.shape != (n, n):
            raise ValueError(f"adjacency must be square, got {a.shape}")
        if a.nnz and not np.all(a.data == 1.0):
            raise ValueError("adjacency entries must be 0/1")
        if a.diagonal().any():
            raise ValueError("adjacency must have a zero diagonal")
        if (a != a.T).nnz:
            raise ValueError("adjacency must be symmetric")
        if self.attributes.shape[0] != n:
            raise ValueError(f"attributes have {self.attributes.shape[0]} rows for {n} nodes")
        if self.attribute_kind not in ("binary", "continuous"):
            raise ValueError(f"unknown attribute kind {self.attribute_kind!r}")
        if self.attribute_kind == "binary" and not np.isin(self.attributes, (0.0, 1.0)).all():
            raise ValueError("binary attributes must be 0/1")
        if not np.isfinite(self.attributes).all():
            raise ValueError("attributes must be finite")
        if self.node_labels is not None and self.node_labels.shape != (n,):
            raise ValueError("node_labels must have one entry per node")

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    @property
    def num_edges(self) -> int:
        return self.adjacency.nnz // 2

    @property
    def num_attributes(self) -> int:
        return self.attributes.shape[1]

    @property
    def num_classes(self) -> int:
        if self.node_labels is None:
            return 0
        return int(self.node_labels.max()) + 1

    def dense_adjacency(self) -> np.ndarray:
        return self.adjacency.toarray()

    def edges(self) -> np.ndarray:
        """Undirected edges as an (m, 2) array with i < j."""
        upper = sp.triu(self.adjacency, k=1).tocoo()
        order = np.lexsort((upper.col, upper.row))
        return np.stack([upper.row[order], upper.col[order]], axis=1).astype(np.int64)

    def neighbors(self, i: int) -> np.ndarray:
        a = self.adjacency
        return a.indices[a.indptr[i]:a.indptr[i + 1]]

    def replace(self, **changes) -> "Graph":
        fields = dict(adjacency=self.adjacency, attributes=self.attributes,
                      attribute_kind=self.attribute_kind, node_labels=self.node_labels,
                      check=False)
        fields.update(changes)
        return Graph(**fields)

    def equals(self, other: "Graph") -> bool:
        return (self.adjacency.shape == other.adjacency.shape
                and (self.adjacency != other.adjacency).nnz == 0
                and self.attributes.shape == other.attributes.shape
                and np.array_equal(self.attributes, other.attributes))


@dataclass
class GraphSet:
    graphs: list[Graph]
    graph_labels: np.ndarray
    num_classes: int = 0

    def __post_init__(self):
        self.graph_labels = np.asarray(self.graph_labels, dtype=np.int64)
        if len(self.graphs) != len(self.graph_labels):
            raise MalformedInputError(
                f"{len(self.graphs)} graphs but {len(self.graph_labels)} labels")
        if not self.num_classes:
            self.num_classes = int(self.graph_labels.max()) + 1 if len(self.graph_labels) else 0
        if len(self.graph_labels) and (self.graph_labels.min() < 0
                                       or self.graph_labels.max() >= self.num_classes):
            raise MalformedInputError("graph label outside the category set")

    def __len__(self):
        return len(self.graphs)


@dataclass
class SubgraphView:
    sub: Graph
    parent_index: np.ndarray
    target_local: np.ndarray
    augmentation: Augmentation = Augmentation.NONE
    hops: np.ndarray | None = None  # BFS distance from the nearest target, -1 if unreachable
    augmentation_fallback: bool = False

    @property
    def n(self) -> int:
        return self.sub.n


@dataclass
class LabeledSplit:
    train: np.ndarray
    validation: np.ndarray
    test: np.ndarray

    def __post_init__(self):
        self.train = np.asarray(self.train, dtype=np.int64)
        self.validation = np.asarray(self.validation, dtype=np.int64)
        self.test = np.asarray(self.test, dtype=np.int64)
        parts = [set(self.train.tolist()), set(self.validation.tolist()), set(self.test.tolist())]
        if parts[0] & parts[1] or parts[0] & parts[2] or parts[1] & parts[2]:
            raise ValueError("split parts must be pairwise disjoint")


@dataclass
class LinkSample:
    positives: np.ndarray
    negatives: np.ndarray

    def __post_init__(self):
        self.positives = np.asarray(self.positives, dtype=np.int64).reshape(-1, 2)
        self.negatives = np.asarray(self.negatives, dtype=np.int64).reshape(-1, 2)
        for name, arr in (("positives", self.positives), ("negatives", self.negatives)):
            if len(arr) and np.any(arr[:, 0] == arr[:, 1]):
                raise ValueError(f"{name} contain self pairs")

    def validate_against(self, g: Graph) -> None:
        for arr in (self.positives, self.negatives):
            if len(arr) and (arr.min() < 0 or arr.max() >= g.n):
                raise ValueError("link sample references invalid node ids")
        a = g.adjacency
        if len(self.positives) and not np.all(a[self.positives[:, 0], self.positives[:, 1]]):
            raise ValueError("positive pairs must be edges of the graph")
        if len(self.negatives) and np.any(a[self.negatives[:, 0], self.negatives[:, 1]]):
            raise ValueError("negative pairs must not be edges of the graph")


def random_split(ids, ratios, rng: np.random.Generator) -> LabeledSplit:
    ids = np.asarray(ids, dtype=np.int64)
    if not math.isclose(sum(ratios), 1.0, abs_tol=1e-9):
        raise ValueError(f"split ratios must sum to 1, got {ratios}")
    perm = rng.permutation(ids)
    n_train = int(round(ratios[0] * len(ids)))
    n_val = int(round(ratios[1] * len(ids)))
    return LabeledSplit(np.sort(perm[:n_train]), np.sort(perm[n_train:n_train + n_val]),
                        np.sort(perm[n_train + n_val:]))


def sample_non_edges(g: Graph, count: int, rng: np.random.Generator,
                     exclude: set | None = None) -> np.ndarray:
    """Uniformly sample distinct unordered non-adjacent pairs (i < j)."""
    n = g.n
    a = g.adjacency
    taken = set() if exclude is None else set(exclude)
    out = []
    max_pairs = n * (n - 1) // 2 - g.num_edges - len(taken)
    if count > max_pairs:
        raise ValueError(f"cannot sample {count} non-edges, only {max_pairs} available")
    while len(out) < count:
        need = count - len(out)
        i = rng.integers(0, n, size=2 * need + 8)
        j = rng.integers(0, n, size=2 * need + 8)
        for u, v in zip(i.tolist(), j.tolist()):
            if u == v:
                continue
            if u > v:
                u, v = v, u
            if (u, v) in taken or a[u, v]:
                continue
            taken.add((u, v))
            out.append((u, v))
            if len(out) == count:
                break
    return np.array(out, dtype=np.int64).reshape(-1, 2)


def split_links(g: Graph, ratios, rng: np.random.Generator):
    """Hold out edges for link prediction.

    Returns the observed graph (training edges only) and a dict of
    ``LinkSample`` for ``train``/``validation``/``test``; negatives are
    non-edges of the full graph, equal in count to the positives.
    """
    edges = g.edges()
    perm = rng.permutation(len(edges))
    n_train = int(round(ratios[0] * len(edges)))
    n_val = int(round(ratios[1] * len(edges)))
    parts = {"train": edges[perm[:n_train]], "validation": edges[perm[n_train:n_train + n_val]],
             "test": edges[perm[n_train + n_val:]]}
    used: set = set()
    samples = {}
    for name in ("train", "validation", "test"):
        neg = sample_non_edges(g, len(parts[name]), rng, exclude=used)
        used.update(map(tuple, neg.tolist()))
        samples[name] = LinkSample(parts[name], neg)
    observed = graph_from_edges(g.n, parts["train"], g.attributes, g.node_labels,
                                g.attribute_kind)
    return observed, samples


def graph_from_edges(n: int, edges, attributes=None, node_labels=None,
                     attribute_kind: str | None = None) -> Graph:
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if len(edges) and (edges.min() < 0 or edges.max() >= n):
        raise MalformedInputError(f"edge references node outside 0..{n - 1}")
    keep = edges[:, 0] != edges[:, 1]
    edges = edges[keep]
    rows = np.concatenate([edges[:, 0], edges[:, 1]])
    cols = np.concatenate([edges[:, 1], edges[:, 0]])
    adj = sp.coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n)).tocsr()
    adj.data[:] = 1.0  # duplicates were summed
    if attributes is None:
        attributes = np.eye(n)
    attributes = np.asarray(attributes, dtype=np.float64)
    if attribute_kind is None:
        attribute_kind = "binary" if np.isin(attributes, (0.0, 1.0)).all() else "continuous"
    return Graph(adj, attributes, attribute_kind, node_labels)


# ---------------------------------------------------------------- readers

def _parse_int(tok: str, path, lineno) -> int:
    try:
        return int(tok)
    except ValueError:
        raise MalformedInputError(f"{path}:{lineno}: non-integer token {tok!r}") from None


def _read_int_pairs(path) -> np.ndarray:
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            toks = line.replace(",", " ").split()
            if not toks or toks[0].startswith("#"):
                continue
            if len(toks) < 2:
                raise MalformedInputError(f"{path}:{lineno}: expected 'src dst'")
            pairs.append((_parse_int(toks[0], path, lineno), _parse_int(toks[1], path, lineno)))
    return np.array(pairs, dtype=np.int64).reshape(-1, 2)


def _read_int_column(path) -> np.ndarray:
    vals = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if line:
                vals.append(_parse_int(line.split(",")[0].split()[0], path, lineno))
    return np.array(vals, dtype=np.int64)


def _read_attributes(path) -> np.ndarray:
    rows: list = []
    sparse = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            toks = line.replace(",", " ").split()
            is_sparse = ":" in toks[0]
            if sparse is None:
                sparse = is_sparse
            elif sparse != is_sparse:
                raise MalformedInputError(f"{path}:{lineno}: mixed dense and sparse rows")
            try:
                if is_sparse:
                    rows.append([(int(t.split(":")[0]), float(t.split(":")[1])) for t in toks])
                else:
                    rows.append([float(t) for t in toks])
            except (ValueError, IndexError):
                raise MalformedInputError(f"{path}:{lineno}: cannot parse attribute row") from None
    if not rows:
        raise MalformedInputError(f"{path}: no attribute rows")
    if sparse:
        dim = 1 + max((i for r in rows for i, _ in r), default=-1)
        out = np.zeros((len(rows), dim))
        for r, entries in enumerate(rows):
            for i, v in entries:
                out[r, i] = v
        return out
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise MalformedInputError(f"{path}: ragged attribute rows")
    return np.array(rows, dtype=np.float64)


def load_edge_list(edge_path, attr_path=None, label_path=None, num_nodes=None) -> Graph:
    """Read a 0-indexed whitespace edge list plus optional attributes/labels.

    Without an attribute file the identity matrix is used.
    """
    edges = _read_int_pairs(edge_path)
    attributes = _read_attributes(attr_path) if attr_path else None
    labels = _read_int_column(label_path) if label_path else None
    sizes = [len(x) for x in (attributes, labels) if x is not None]
    if num_nodes is not None:
        sizes.append(num_nodes)
    if len(set(sizes)) > 1:
        raise MalformedInputError(f"inconsistent node counts across files: {sizes}")
    if len(edges) and edges.min() < 0:
        raise MalformedInputError("negative node id in edge list")
    if sizes:
        n = sizes[0]
    else:
        n = int(edges.max()) + 1 if len(edges) else 0
    return graph_from_edges(n, edges, attributes, labels)


def write_edge_list(g: Graph, directory) -> None:
    """Write ``edges.txt``, ``attributes.txt`` and (if present) ``labels.txt``."""
    os.makedirs(directory, exist_ok=True)
    with open(os.path.join(directory, "edges.txt"), "w", encoding="utf-8") as fh:
        for i, j in g.edges():
            fh.write(f"{i} {j}\n")
    with open(os.path.join(directory, "attributes.txt"), "w", encoding="utf-8") as fh:
        for row in g.attributes:
            nz = np.flatnonzero(row)
            fh.write(" ".join(f"{k}:{row[k]:.17g}" for k in nz) if len(nz) else "0:0")
            fh.write("\n")
    if g.node_labels is not None:
        with open(os.path.join(directory, "labels.txt"), "w", encoding="utf-8") as fh:
            fh.write("".join(f"{int(y)}\n" for y in g.node_labels))


def load_edge_list_dir(directory) -> Graph:
    def opt(name):
        p = os.path.join(directory, name)
        return p if os.path.exists(p) else None

    edges = opt("edges.txt")
    if edges is None:
        raise FileNotFoundError(os.path.join(directory, "edges.txt"))
    return load_edge_list(edges, opt("attributes.txt"), opt("labels.txt"))


def load_linqs_citation(content_path, cites_path) -> Graph:
    """Read the LINQS ``.content``/``.cites`` pair (the usual Cora release)."""
    ids, feats, raw_labels = [], [], []
    with open(content_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            toks = line.split()
            if not toks:
                continue
            if len(toks) < 3:
                raise MalformedInputError(f"{content_path}:{lineno}: short row")
            ids.append(toks[0])
            try:
                feats.append([float(t) for t in toks[1:-1]])
            except ValueError:
                raise MalformedInputError(f"{content_path}:{lineno}: bad attribute") from None
            raw_labels.append(toks[-1])
    index = {pid: k for k, pid in enumerate(ids)}
    classes = {c: k for k, c in enumerate(sorted(set(raw_labels)))}
    edges = []
    with open(cites_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            toks = line.split()
            if not toks:
                continue
            if len(toks) != 2:
                raise MalformedInputError(f"{cites_path}:{lineno}: expected two ids")
            if toks[0] in index and toks[1] in index:
                edges.append((index[toks[0]], index[toks[1]]))
    labels = np.array([classes[c] for c in raw_labels])
    return graph_from_edges(len(ids), edges, np.array(feats), labels)


def load_tu_dataset(directory, name: str) -> GraphSet:
    """Read a TU-format graph classification dataset (1-indexed files)."""
    def path(suffix):
        return os.path.join(directory, f"{name}_{suffix}.txt")

    edges = _read_int_pairs(path("A")) - 1
    indicator = _read_int_column(path("graph_indicator"))
    graph_labels = _read_int_column(path("graph_labels"))
    n_total = len(indicator)
    n_graphs = int(indicator.max()) if n_total else 0
    if n_graphs != len(graph_labels):
        raise MalformedInputError(
            f"graph_indicator names {n_graphs} graphs but there are {len(graph_labels)} labels")
    if len(edges) and (edges.min() < 0 or edges.max() >= n_total):
        raise MalformedInputError("edge references a node outside graph_indicator")

    attributes = None
    kind = "binary"
    if os.path.exists(path("node_attributes")):
        attributes = _read_attributes(path("node_attributes"))
        kind = "continuous"
    elif os.path.exists(path("node_labels")):
        node_lab = _read_int_column(path("node_labels"))
        if len(node_lab) != n_total:
            raise MalformedInputError("node_labels length differs from graph_indicator")
        values = np.unique(node_lab)
        attributes = (node_lab[:, None] == values[None, :]).astype(np.float64)
    else:
        attributes = np.ones((n_total, 1))
    if len(attributes) != n_total:
        raise MalformedInputError("node attribute rows differ from graph_indicator")

    graph_of = indicator - 1
    order = np.argsort(graph_of, kind="stable")
    starts = np.searchsorted(graph_of[order], np.arange(n_graphs + 1))
    local = np.empty(n_total, dtype=np.int64)
    by_graph = defaultdict(list)
    for g_id in range(n_graphs):
        members = order[starts[g_id]:starts[g_id + 1]]
        local[members] = np.arange(len(members))
    for u, v in edges.tolist():
        if graph_of[u] != graph_of[v]:
            raise MalformedInputError(f"edge ({u + 1}, {v + 1}) crosses graphs")
        by_graph[graph_of[u]].append((local[u], local[v]))
    graphs = []
    for g_id in range(n_graphs):
        members = order[starts[g_id]:starts[g_id + 1]]
        graphs.append(graph_from_edges(len(members), by_graph.get(g_id, []),
                                       attributes[members], None, kind))
    uniq = np.unique(graph_labels)
    remapped = np.searchsorted(uniq, graph_labels)
    return GraphSet(graphs, remapped, len(uniq))


# ------------------------------------------------------------ operations

def normalize_adjacency(g, dense: bool = True):
    """D^-1/2 (A + I) D^-1/2 for a Graph, dense array or sparse matrix."""
    a = g.adjacency if isinstance(g, Graph) else g
    if sp.issparse(a):
        a = sp.csr_matrix(a, dtype=np.float64)
        a_tilde = a + sp.identity(a.shape[0], format="csr")
        deg = np.asarray(a_tilde.sum(axis=1)).ravel()
        s = sp.diags(1.0 / np.sqrt(deg))
        out = (s @ a_tilde @ s).tocsr()
        return out.toarray() if dense else out
    a_tilde = np.asarray(a, dtype=np.float64) + np.eye(a.shape[0])
    s = 1.0 / np.sqrt(a_tilde.sum(axis=1))
    return a_tilde * s[:, None] * s[None, :]


def degree_sequence(g: Graph) -> np.ndarray:
    return np.diff(g.adjacency.indptr).astype(np.int64)


def bfs_hops(adjacency: sp.csr_matrix, sources, max_hops: int | None = None) -> np.ndarray:
    """Multi-source BFS distances; -1 for nodes beyond ``max_hops``/unreachable."""
    n = adjacency.shape[0]
    dist = np.full(n, -1, dtype=np.int64)
    frontier = np.unique(np.asarray(sources, dtype=np.int64))
    dist[frontier] = 0
    indptr, indices = adjacency.indptr, adjacency.indices
    depth = 0
    while len(frontier) and (max_hops is None or depth < max_hops):
        depth += 1
        nbrs = np.concatenate([indices[indptr[u]:indptr[u + 1]] for u in frontier]) \
            if len(frontier) else np.empty(0, dtype=np.int64)
        nbrs = np.unique(nbrs)
        nbrs = nbrs[dist[nbrs] < 0]
        dist[nbrs] = depth
        frontier = nbrs
    return dist


def induced_subgraph(g: Graph, nodes) -> Graph:
    nodes = np.asarray(nodes, dtype=np.int64)
    adj = g.adjacency[nodes][:, nodes]
    labels = None if g.node_labels is None else g.node_labels[nodes]
    return Graph(adj, g.attributes[nodes], g.attribute_kind, labels, check=False)


def k_hop_subgraph(g: Graph, targets, K: int,
                   augmentation: Augmentation | str = Augmentation.NONE,
                   sim_scores=None, rng: np.random.Generator | None = None,
                   ratio: float = 0.2, similarity_threshold: float = 0.9,
                   target_label: int | None = None) -> SubgraphView:
    """Induced K-hop ball around ``targets``, optionally augmented.

    ``sim_scores`` is a callable ``target_id -> length-N similarity vector``
    or an (N,) / (N, N) array; it is required for high-similarity mode.
    Targets come first in the local ordering, then ball members by hop and
    id, then augmented nodes.
    """
    augmentation = Augmentation(augmentation)
    targets = np.atleast_1d(np.asarray(targets, dtype=np.int64))
    if len(targets) == 0:
        raise ValueError("at least one target is required")
    if K < 1:
        raise ValueError("K must be >= 1")
    rng = rng if rng is not None else np.random.default_rng(0)
    dist = bfs_hops(g.adjacency, targets, K)
    ball = np.flatnonzero(dist >= 0)
    rest = np.setdiff1d(ball, targets)
    rest = rest[np.lexsort((rest, dist[rest]))]
    _, first = np.unique(targets, return_index=True)
    members = np.concatenate([targets[np.sort(first)], rest])
    n_ball = len(members)
    n_extra = math.ceil(ratio * n_ball)

    extra = np.empty(0, dtype=np.int64)
    fallback = False
    if augmentation is not Augmentation.NONE and n_extra > 0:
        outside = np.flatnonzero(dist < 0)
        if augmentation is Augmentation.RANDOM_OTHER_CLASS:
            if g.node_labels is not None:
                lab = g.node_labels[targets[0]] if target_label is None else target_label
                outside = outside[g.node_labels[outside] != lab]
            pool = outside
        else:
            if sim_scores is None:
                raise ValueError("high_similarity augmentation needs similarity scores")
            if callable(sim_scores):
                sims = np.asarray(sim_scores(int(targets[0])))
            else:
                s = np.asarray(sim_scores)
                sims = s[targets[0]] if s.ndim == 2 else s
            pool = outside[sims[outside] > similarity_threshold]
        if len(pool) == 0:
            fallback = augmentation is Augmentation.HIGH_SIMILARITY
        else:
            extra = np.sort(rng.choice(pool, size=min(n_extra, len(pool)), replace=False))
    if fallback:
        augmentation = Augmentation.NONE

    nodes = np.concatenate([members, extra])
    sub = induced_subgraph(g, nodes)
    hops = np.concatenate([dist[members], np.full(len(extra), -1, dtype=np.int64)])
    return SubgraphView(sub, nodes, np.arange(len(np.unique(targets))), augmentation,
                        hops, fallback)


def splice_subgraph(g: Graph, view: SubgraphView, adv_sub: Graph) -> Graph:
    """Overwrite the view's block of ``g`` with ``adv_sub``."""
    if adv_sub.n != view.sub.n or adv_sub.num_attributes != view.sub.num_attributes:
        raise ValueError("adversarial subgraph shape does not match the view")
    if adv_sub.num_attributes != g.num_attributes:
        raise ValueError("attribute dimension mismatch")
    idx = view.parent_index
    old_block = g.adjacency[idx][:, idx]
    diff = (adv_sub.adjacency - old_block).tocoo()
    diff.eliminate_zeros()
    if diff.nnz:
        delta = sp.coo_matrix((diff.data, (idx[diff.row], idx[diff.col])), shape=g.adjacency.shape)
        adj = (g.adjacency + delta).tocsr()
        adj.eliminate_zeros()
    else:
        adj = g.adjacency
    old_x = g.attributes[idx]
    if np.array_equal(old_x, adv_sub.attributes):
        attrs = g.attributes
    else:
        attrs = g.attributes.copy()
        attrs[idx] = adv_sub.attributes
    return g.replace(adjacency=adj, attributes=attrs)
