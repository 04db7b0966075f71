"""Feature hierarchy: loading, validation and ancestor/descendant closure.

The hierarchy is a DAG whose edges point from a child feature to one of its
parents (an is-a relation). Every redundancy check downstream asks the same
question, "is one of these features an ancestor of the other?", so the
closure is computed once and shared read-only.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, TextIO

import networkx as nx
import numpy as np
from logzero import logger

from .errors import CycleError, HierarchyParseError, UnknownFeatureError


@dataclass(frozen=True, eq=False)
class FeatureDag:
    features: tuple[str, ...]
    parent_edges: frozenset[tuple[str, str]]

    @cached_property
    def graph(self) -> nx.DiGraph:
        """Directed child -> parent graph over all features."""
        graph = nx.DiGraph()
        graph.add_nodes_from(self.features)
        graph.add_edges_from(self.parent_edges)
        return graph

    @cached_property
    def index(self) -> dict[str, int]:
        return {feature: i for i, feature in enumerate(self.features)}

    @property
    def roots(self) -> tuple[str, ...]:
        return tuple(f for f in self.features if self.graph.out_degree(f) == 0)

    def parents(self, feature: str) -> tuple[str, ...]:
        if feature not in self.index:
            raise UnknownFeatureError(feature)
        return tuple(sorted(self.graph.successors(feature), key=self.index.get))

    def __contains__(self, feature: object) -> bool:
        return feature in self.index

    def __len__(self) -> int:
        return len(self.features)


@dataclass(frozen=True, eq=False)
class ClosureTable:
    """Strict transitive closure: a feature is never its own ancestor."""

    features: tuple[str, ...]
    ancestors: Mapping[str, frozenset[str]]
    descendants: Mapping[str, frozenset[str]]
    _relations: dict = field(default_factory=dict, repr=False, compare=False)

    def _check(self, feature: str) -> None:
        if feature not in self.ancestors:
            raise UnknownFeatureError(feature)

    def ancestors_of(self, feature: str) -> frozenset[str]:
        self._check(feature)
        return self.ancestors[feature]

    def descendants_of(self, feature: str) -> frozenset[str]:
        self._check(feature)
        return self.descendants[feature]

    def relation_matrix(self, features: tuple[str, ...]) -> np.ndarray:
        """Boolean matrix R with R[i, j] true iff features i and j are related.

        Cached per feature tuple; the cache is only ever filled with
        identical values, so concurrent readers are safe.
        """
        features = tuple(features)
        cached = self._relations.get(features)
        if cached is not None:
            return cached
        position = {feature: i for i, feature in enumerate(features)}
        related = np.zeros((len(features), len(features)), dtype=bool)
        for i, feature in enumerate(features):
            self._check(feature)
            for other in self.ancestors[feature]:
                j = position.get(other)
                if j is not None:
                    related[i, j] = related[j, i] = True
        related.setflags(write=False)
        self._relations[features] = related
        return related


def _valid_identifier(token: str) -> bool:
    return bool(token) and not any(ch.isspace() for ch in token)


def load_hierarchy(source: TextIO) -> FeatureDag:
    """Read a `child<TAB>parent` TSV stream into a validated FeatureDag."""
    order: dict[str, None] = {}
    edges: set[tuple[str, str]] = set()

    for line_no, raw in enumerate(source, start=1):
        line = raw.rstrip("\r\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != 2:
            raise HierarchyParseError(line_no, f"expected 2 tab-separated fields, got {len(fields)}")
        child, parent = (f.strip() for f in fields)
        for token in (child, parent):
            if not _valid_identifier(token):
                raise HierarchyParseError(line_no, f"invalid feature identifier {token!r}")
        order.setdefault(child)
        order.setdefault(parent)
        edges.add((child, parent))

    dag = FeatureDag(features=tuple(order), parent_edges=frozenset(edges))
    _check_acyclic(dag)
    logger.debug("Loaded hierarchy: %d features, %d edges, %d roots", len(dag.features), len(edges), len(dag.roots))
    return dag


def _check_acyclic(dag: FeatureDag) -> None:
    if nx.is_directed_acyclic_graph(dag.graph):
        return
    cycle = nx.find_cycle(dag.graph)
    members = {node for edge in cycle for node in edge[:2]}
    raise CycleError(min(members, key=dag.index.get))


def serialize_hierarchy(dag: FeatureDag) -> str:
    """Inverse of load_hierarchy for DAGs whose features all lie on an edge."""
    return "".join(f"{child}\t{parent}\n" for child in dag.features for parent in dag.parents(child))


def make_dag(features: Iterable[str], parent_edges: Iterable[tuple[str, str]] = ()) -> FeatureDag:
    """Build a FeatureDag in memory, with the same checks as load_hierarchy."""
    features = tuple(dict.fromkeys(features))
    edges = frozenset(parent_edges)
    known = set(features)
    for child, parent in edges:
        for token in (child, parent):
            if token not in known:
                raise UnknownFeatureError(token)
    for token in features:
        if not _valid_identifier(token):
            raise HierarchyParseError(0, f"invalid feature identifier {token!r}")
    dag = FeatureDag(features=features, parent_edges=edges)
    _check_acyclic(dag)
    return dag


def build_closure(dag: FeatureDag) -> ClosureTable:
    graph = dag.graph
    # child -> parent edges: reachable nodes are ancestors
    ancestors = {x: frozenset(nx.descendants(graph, x)) for x in dag.features}
    descendants = {x: frozenset(nx.ancestors(graph, x)) for x in dag.features}
    return ClosureTable(features=dag.features, ancestors=ancestors, descendants=descendants)


def is_hier_related(closure: ClosureTable, x: str, y: str) -> bool:
    ancestors_x = closure.ancestors_of(x)
    ancestors_y = closure.ancestors_of(y)
    return y in ancestors_x or x in ancestors_y
