"""Stealthiness measures: perturbation counts, degree statistic, SMR, L2."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .graph import Graph, degree_sequence


class UndefinedStatisticError(ValueError):
    pass


# ------------------------------------------------------------ constraint sets

@dataclass(frozen=True)
class ConstraintSet:
    """Budget ratio r plus optional Λ / SMR / L2 caps.

    ``budget_mode`` "edges" gives Δ = ⌊r·|E|⌋ shared by links and attribute
    flips; "graph" gives separate caps ⌊r·N²⌋ on links and ⌊r·N⌋ on attributes.
    """
    budget_ratio: float = 0.05
    budget_mode: str = "edges"
    lambda_threshold: float | None = None
    smr_threshold: float | None = None
    l2_threshold: float | None = None
    d_min: int = 2
    name: str = "custom"

    def __post_init__(self):
        if self.budget_ratio < 0:
            raise ValueError("budget ratio must be nonnegative")
        for t in (self.lambda_threshold, self.smr_threshold, self.l2_threshold):
            if t is not None and t < 0:
                raise ValueError("thresholds must be nonnegative")
        if self.budget_mode not in ("edges", "graph"):
            raise ValueError(f"unknown budget mode {self.budget_mode!r}")

    def link_budget(self, g: Graph) -> int:
        if self.budget_mode == "graph":
            return math.floor(self.budget_ratio * g.n * g.n + 1e-9)
        return math.floor(self.budget_ratio * g.num_edges + 1e-9)

    def attr_budget(self, g: Graph) -> int:
        if self.budget_mode == "graph":
            return math.floor(self.budget_ratio * g.n + 1e-9)
        return self.link_budget(g)

    def to_dict(self) -> dict:
        return {"name": self.name, "budget_ratio": self.budget_ratio,
                "budget_mode": self.budget_mode, "lambda_threshold": self.lambda_threshold,
                "smr_threshold": self.smr_threshold, "l2_threshold": self.l2_threshold,
                "d_min": self.d_min}


PROFILES = ("B-GA", "D-GA", "S-GA")


def profile(name: str, budget_ratio: float = 0.05, budget_mode: str = "edges") -> ConstraintSet:
    if name == "B-GA":
        return ConstraintSet(budget_ratio, budget_mode, name=name)
    if name == "D-GA":
        return ConstraintSet(budget_ratio, budget_mode, lambda_threshold=0.004, name=name)
    if name == "S-GA":
        return ConstraintSet(budget_ratio, budget_mode, lambda_threshold=0.004,
                             smr_threshold=0.05, name=name)
    raise ValueError(f"unknown profile {name!r}; expected one of {PROFILES}")


# ------------------------------------------------------------ measurements

def perturbation_delta(g: Graph, g2: Graph) -> tuple[int, int]:
    if g.n != g2.n or g.num_attributes != g2.num_attributes:
        raise ValueError("graphs differ in shape")
    diff = sp.triu(g.adjacency - g2.adjacency, k=1)
    diff.eliminate_zeros()
    links = int(diff.nnz)
    attrs = int(np.count_nonzero(g.attributes != g2.attributes))
    return links, attrs


def _powerlaw_terms(degrees, d_min):
    d = degrees[degrees >= d_min].astype(np.float64)
    return len(d), float(np.log(d).sum())


def _alpha(n, s, d_min):
    return 1.0 + n / (s - n * math.log(d_min - 0.5))


def _loglik(n, alpha, s, d_min):
    return n * math.log(alpha) + n * alpha * math.log(d_min) - (alpha + 1.0) * s


def degree_test_statistic(g: Graph, g2: Graph, d_min: int = 2) -> float:
    """Power-law likelihood-ratio statistic between two degree sequences.

    Each sample (clean, perturbed, and their concatenation) gets its own
    MLE exponent; Λ = -2·ll(combined) + 2·(ll(clean) + ll(perturbed)).
    """
    if d_min < 1:
        raise ValueError("d_min must be >= 1")
    d1 = degree_sequence(g)
    d2 = degree_sequence(g2)
    n1, s1 = _powerlaw_terms(d1, d_min)
    n2, s2 = _powerlaw_terms(d2, d_min)
    if n1 == 0 or n2 == 0:
        raise UndefinedStatisticError(f"no node with degree >= {d_min}")
    if np.array_equal(d1, d2):
        return 0.0
    a1, a2 = _alpha(n1, s1, d_min), _alpha(n2, s2, d_min)
    a12 = _alpha(n1 + n2, s1 + s2, d_min)
    ll1 = _loglik(n1, a1, s1, d_min)
    ll2 = _loglik(n2, a2, s2, d_min)
    ll12 = _loglik(n1 + n2, a12, s1 + s2, d_min)
    return float(-2.0 * ll12 + 2.0 * (ll1 + ll2))


def node_cosine_similarity(z, i, j) -> float:
    zi, zj = np.asarray(z[i], dtype=np.float64), np.asarray(z[j], dtype=np.float64)
    ni, nj = np.linalg.norm(zi), np.linalg.norm(zj)
    if ni == 0 or nj == 0:
        return 0.0
    return float(zi @ zj / (ni * nj))


def neighbor_similarities(z, i, neighbors) -> np.ndarray:
    """Cosine similarity of z_i to each listed neighbor (0 for zero vectors)."""
    neighbors = np.asarray(neighbors, dtype=np.int64)
    zn = z[neighbors]
    norms = np.linalg.norm(zn, axis=1) * np.linalg.norm(z[i])
    dots = zn @ z[i]
    return np.divide(dots, norms, out=np.zeros_like(dots), where=norms > 0)


def average_neighbor_similarity(z, g: Graph, i) -> float | None:
    nbrs = g.neighbors(i)
    if len(nbrs) == 0:
        return None
    return float(neighbor_similarities(z, i, nbrs).mean())


@dataclass
class SmrValue:
    value: float
    clean_avg: float | None
    adv_avg: float | None
    flag: str = ""


def smr_from_embeddings(g: Graph, g2: Graph, z, z2, i) -> SmrValue:
    clean = average_neighbor_similarity(z, g, i)
    if clean is None:
        return SmrValue(0.0, None, average_neighbor_similarity(z2, g2, i), "isolated")
    if clean <= 0:
        raise UndefinedStatisticError(f"clean average similarity of node {i} is {clean:.4g}")
    adv = average_neighbor_similarity(z2, g2, i)
    if adv is None:
        # every clean neighbor was cut: the similarity mass is entirely lost
        return SmrValue(1.0, clean, None, "isolated_after")
    return SmrValue((clean - adv) / clean, clean, adv)


def smr(g: Graph, g2: Graph, extractor, i) -> float:
    """Similarity modification rate of node ``i``; ``extractor(graph) -> Z``."""
    return smr_from_embeddings(g, g2, extractor(g), extractor(g2), i).value


def l2_attribute_norm(x, x2) -> float:
    x, x2 = np.asarray(x, dtype=np.float64), np.asarray(x2, dtype=np.float64)
    if x.shape != x2.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {x2.shape}")
    return float(np.sqrt(((x - x2) ** 2).sum()))


# ------------------------------------------------------------ verdicts

@dataclass
class PerturbationReport:
    links_changed: int
    attrs_changed: int
    l2_attr: float
    lambda_stat: float | None
    smr_value: float | None
    verdicts: dict = field(default_factory=dict)
    flags: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(self.verdicts.values())

    def to_dict(self) -> dict:
        return {"links_changed": self.links_changed, "attrs_changed": self.attrs_changed,
                "l2_attr": self.l2_attr, "lambda_stat": self.lambda_stat,
                "smr_value": self.smr_value, "verdicts": dict(self.verdicts),
                "passed": self.passed, "flags": list(self.flags)}


def check_constraints(g: Graph, g2: Graph, cset: ConstraintSet, extractor=None, targets=(),
                      clean_embedding=None) -> PerturbationReport:
    """Evaluate every enabled constraint of ``cset`` on the pair (g, g2).

    ``targets`` are the attacked node ids; SMR is the worst (largest) value
    over them. ``clean_embedding`` may carry a cached extractor(g).
    """
    links, attrs = perturbation_delta(g, g2)
    l2 = l2_attribute_norm(g.attributes, g2.attributes)
    verdicts = {}
    flags = []
    if cset.budget_mode == "graph":
        verdicts["budget_links"] = links <= cset.link_budget(g)
        verdicts["budget_attrs"] = attrs <= cset.attr_budget(g)
    else:
        verdicts["budget"] = links + attrs <= cset.link_budget(g)

    lam = None
    if cset.lambda_threshold is not None:
        lam = degree_test_statistic(g, g2, cset.d_min)
        verdicts["lambda"] = lam < cset.lambda_threshold

    smr_val = None
    if cset.smr_threshold is not None:
        if extractor is None:
            raise ValueError("SMR constraint needs an embedding extractor")
        z = extractor(g) if clean_embedding is None else clean_embedding
        z2 = z if (links == 0 and attrs == 0) else extractor(g2)
        values = []
        for t in np.atleast_1d(targets):
            v = smr_from_embeddings(g, g2, z, z2, int(t))
            values.append(v.value)
            if v.flag:
                flags.append(f"smr_{v.flag}:{int(t)}")
        smr_val = max(values) if values else 0.0
        verdicts["smr"] = smr_val < cset.smr_threshold

    if cset.l2_threshold is not None:
        verdicts["l2"] = l2 < cset.l2_threshold
    return PerturbationReport(links, attrs, l2, lam, smr_val, verdicts, flags)
