"""Candidate edges, edge weights and the redundancy-eliminated spanning forest.

Edges are held as index arrays into the dataset feature order; `Edge`
tuples are materialised only at the API boundary.
"""

from __future__ import annotations

import json
from collections.abc import Sequence
from dataclasses import dataclass, replace
from enum import Enum
from typing import Iterator, Mapping, NamedTuple

import networkx as nx
import numpy as np
from logzero import logger

from .config import SMOOTHING, WEIGHT_DECIMALS
from .dataset import Dataset, Instance
from .errors import ContractError, EmptyTrainingSetError, UnknownFeatureError
from .hierarchy import ClosureTable


class CandidateMode(str, Enum):
    ALL = "all"
    MIX = "mix"
    PLUS = "plus"


class MiMode(str, Enum):
    CONDITIONAL = "conditional"
    UNCONDITIONAL = "unconditional"


class EdgeStatus(str, Enum):
    AVAILABLE = "available"
    REMOVED = "removed"


class Edge(NamedTuple):
    a: str
    b: str


class EdgeList(Sequence):
    """All unordered feature pairs, canonical (a before b in feature order)."""

    def __init__(self, features: Sequence[str], a: np.ndarray, b: np.ndarray):
        self.features = tuple(features)
        self.a = a
        self.b = b

    def __len__(self) -> int:
        return len(self.a)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return [self[j] for j in range(*i.indices(len(self)))]
        return Edge(self.features[self.a[i]], self.features[self.b[i]])

    def __iter__(self) -> Iterator[Edge]:
        names = self.features
        return (Edge(names[i], names[j]) for i, j in zip(self.a.tolist(), self.b.tolist()))


@dataclass
class EdgeSet:
    """Candidate edges E' with weights M and selection status S.

    hre_mst marks rejected edges removed in place.
    One EdgeSet belongs to one test instance.
    """

    features: tuple[str, ...]
    a: np.ndarray
    b: np.ndarray
    weight: np.ndarray
    available: np.ndarray
    scored: bool = False

    def __len__(self) -> int:
        return len(self.a)

    @property
    def edges(self) -> list[Edge]:
        return list(EdgeList(self.features, self.a, self.b))

    @property
    def weights(self) -> dict[Edge, float]:
        return dict(zip(self.edges, self.weight.tolist()))

    @property
    def status(self) -> dict[Edge, EdgeStatus]:
        return {
            edge: EdgeStatus.AVAILABLE if ok else EdgeStatus.REMOVED
            for edge, ok in zip(self.edges, self.available.tolist())
        }

    @classmethod
    def from_weights(cls, features: Sequence[str], weights: Mapping[tuple[str, str], float]) -> "EdgeSet":
        features = tuple(features)
        rank = {f: i for i, f in enumerate(features)}
        rows = []
        for (x, y), w in weights.items():
            for name in (x, y):
                if name not in rank:
                    raise UnknownFeatureError(name)
            i, j = sorted((rank[x], rank[y]))
            if i == j:
                raise ContractError(f"self edge on {x!r}")
            rows.append((i, j, float(w)))
        rows.sort()
        a = np.array([r[0] for r in rows], dtype=np.int64)
        b = np.array([r[1] for r in rows], dtype=np.int64)
        weight = np.array([r[2] for r in rows], dtype=float)
        if not np.all(np.isfinite(weight)) or np.any(weight < 0):
            raise ContractError("edge weights must be finite and non-negative")
        return cls(features, a, b, weight, np.ones(len(rows), dtype=bool), scored=True)


@dataclass(frozen=True)
class LearnedForest:
    feature_order: tuple[str, ...]
    selected_edges: tuple[Edge, ...]
    weights: tuple[float, ...]
    features: tuple[str, ...]
    parent_of: Mapping[str, str | None]
    roots: tuple[str, ...]

    @property
    def total_weight(self) -> float:
        return float(sum(self.weights))

    def to_dict(self) -> dict:
        return {
            "edges": [[e.a, e.b, w] for e, w in zip(self.selected_edges, self.weights)],
            "roots": list(self.roots),
            "parent_of": dict(self.parent_of),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def generate_edges(features: Sequence[str]) -> EdgeList:
    a, b = np.triu_indices(len(features), k=1)
    return EdgeList(features, a.astype(np.int64), b.astype(np.int64))


def filter_candidates(
    edges: Sequence[Edge],
    inst: Instance,
    mode: CandidateMode,
    closure: ClosureTable | None,
) -> EdgeSet:
    """Keep the edges the mode allows for this instance.

    Mix keeps edges with at least one positive endpoint, Plus edges with two,
    All every edge. With a closure, edges between related features are
    dropped too; passing None (the plain TAN baseline) keeps them.
    """
    mode = CandidateMode(mode)
    if isinstance(edges, EdgeList):
        features, a, b = edges.features, edges.a, edges.b
    else:
        features = inst.features
        rank = {f: i for i, f in enumerate(features)}
        try:
            pairs = sorted(tuple(sorted((rank[e[0]], rank[e[1]]))) for e in edges)
        except KeyError as exc:
            raise ContractError(f"instance has no value for {exc.args[0]!r}") from None
        a = np.array([p[0] for p in pairs], dtype=np.int64)
        b = np.array([p[1] for p in pairs], dtype=np.int64)

    try:
        values = inst.vector(features)
    except UnknownFeatureError as exc:
        raise ContractError(f"instance has no value for {exc.feature!r}") from None

    if mode is CandidateMode.MIX:
        keep = (values[a] == 1) | (values[b] == 1)
    elif mode is CandidateMode.PLUS:
        keep = (values[a] == 1) & (values[b] == 1)
    else:
        keep = np.ones(len(a), dtype=bool)
    if closure is not None and len(a):
        related = closure.relation_matrix(features)
        keep &= ~related[a, b]

    a, b = a[keep], b[keep]
    return EdgeSet(
        features=tuple(features),
        a=a,
        b=b,
        weight=np.zeros(len(a), dtype=float),
        available=np.ones(len(a), dtype=bool),
    )


def _cell_counts(train: Dataset, ia: np.ndarray, ib: np.ndarray) -> np.ndarray:
    """Joint counts over (label, V(a), V(b)) for each pair: shape (L, 2, 2, E)."""
    counts = train.pair_counts
    sizes = counts.sizes[:, None]
    n11 = counts.both[:, ia, ib]
    n1_ = counts.ones[:, ia]
    n_1 = counts.ones[:, ib]
    n10 = n1_ - n11
    n01 = n_1 - n11
    n00 = sizes - n1_ - n_1 + n11
    return np.stack([np.stack([n00, n01], axis=1), np.stack([n10, n11], axis=1)], axis=1).astype(float)


def _plogp_ratio(p: np.ndarray, num: np.ndarray, den: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = p * np.log2(num / den)
    return np.where(p > 0, terms, 0.0)


def pairwise_mi(
    train: Dataset,
    ia: np.ndarray,
    ib: np.ndarray,
    mi_mode: MiMode = MiMode.CONDITIONAL,
    smoothing: float = SMOOTHING,
) -> np.ndarray:
    """Mutual information in bits for the feature pairs (ia[k], ib[k]).

    Probabilities come from the joint (label, V(a), V(b)) table with
    `smoothing` added to every one of its cells.
    """
    if len(train) == 0:
        raise EmptyTrainingSetError("cannot score edges on an empty training set")
    if len(ia) == 0:
        return np.zeros(0, dtype=float)
    cells = _cell_counts(train, ia, ib) + smoothing
    p = cells / cells.sum(axis=(0, 1, 2), keepdims=True)

    if MiMode(mi_mode) is MiMode.CONDITIONAL:
        p_c = p.sum(axis=(1, 2), keepdims=True)
        p_ac = p.sum(axis=2, keepdims=True)
        p_bc = p.sum(axis=1, keepdims=True)
        mi = _plogp_ratio(p, p * p_c, p_ac * p_bc).sum(axis=(0, 1, 2))
    else:
        q = p.sum(axis=0)
        q_a = q.sum(axis=1, keepdims=True)
        q_b = q.sum(axis=0, keepdims=True)
        mi = _plogp_ratio(q, q, q_a * q_b).sum(axis=(0, 1))
    return np.maximum(mi, 0.0)


def score_edges(
    cands: EdgeSet,
    train: Dataset,
    mi_mode: MiMode = MiMode.CONDITIONAL,
    smoothing: float = SMOOTHING,
) -> EdgeSet:
    if len(train) == 0:
        raise EmptyTrainingSetError("cannot score edges on an empty training set")
    rank = {f: i for i, f in enumerate(train.features)}
    try:
        remap = np.array([rank[f] for f in cands.features], dtype=np.int64)
    except KeyError as exc:
        raise UnknownFeatureError(exc.args[0]) from None
    weight = pairwise_mi(train, remap[cands.a], remap[cands.b], mi_mode, smoothing)
    return replace(cands, weight=weight, available=cands.available.copy(), scored=True)


def _greedy_forest(cands: EdgeSet, related: np.ndarray | None) -> LearnedForest:
    if len(cands) and not cands.scored:
        raise ContractError("candidate edges must be scored before building the forest")
    n = len(cands.features)
    pool = np.flatnonzero(cands.available)
    # descending weight, ties by canonical (a, b)
    weight = np.round(cands.weight[pool], WEIGHT_DECIMALS)
    order = pool[np.lexsort((cands.b[pool], cands.a[pool], -weight))]

    sets = nx.utils.UnionFind(range(n))
    blocked = np.zeros(n, dtype=bool)
    accepted: list[int] = []
    a_list, b_list = cands.a.tolist(), cands.b.tolist()
    for idx in order.tolist():
        a, b = a_list[idx], b_list[idx]
        if blocked[a] or blocked[b]:
            continue
        if sets[a] == sets[b]:
            continue
        sets.union(a, b)
        accepted.append(idx)
        if related is not None:
            blocked |= related[a] | related[b]

    cands.available[:] = False
    cands.available[accepted] = True

    names = cands.features
    selected = tuple(Edge(names[a_list[i]], names[b_list[i]]) for i in accepted)
    used = sorted({a_list[i] for i in accepted} | {b_list[i] for i in accepted})
    forest = LearnedForest(
        feature_order=names,
        selected_edges=selected,
        weights=tuple(float(cands.weight[i]) for i in accepted),
        features=tuple(names[i] for i in used),
        parent_of={},
        roots=(),
    )
    logger.debug("Forest: %d of %d candidate edges, %d features", len(accepted), len(cands), len(used))
    return root_forest(forest)


def hre_mst(cands: EdgeSet, closure: ClosureTable) -> LearnedForest:
    """Greedy maximum-weight spanning forest with hierarchical blocking.

    Accepting an edge blocks every ancestor and descendant of both of its
    endpoints for the rest of the scan. Statuses in `cands` are updated in
    place: only accepted edges remain available.
    """
    return _greedy_forest(cands, closure.relation_matrix(cands.features))


def max_spanning_forest(cands: EdgeSet) -> LearnedForest:
    return _greedy_forest(cands, None)


def root_forest(forest: LearnedForest) -> LearnedForest:
    """Direct each component away from its earliest feature, breadth first."""
    rank = {f: i for i, f in enumerate(forest.feature_order)}
    graph = nx.Graph()
    graph.add_nodes_from(forest.features)
    graph.add_edges_from(forest.selected_edges)

    parent_of: dict[str, str | None] = {}
    roots: list[str] = []
    for feature in forest.features:
        if feature in parent_of:
            continue
        roots.append(feature)
        parent_of[feature] = None
        for parent, child in nx.bfs_edges(graph, feature, sort_neighbors=lambda ns: sorted(ns, key=rank.get)):
            parent_of[child] = parent
    ordered = {f: parent_of[f] for f in forest.features}
    return replace(forest, parent_of=ordered, roots=tuple(roots))
