"""Lazy tree-augmented naive Bayes over a per-instance learned forest.

For every test instance the pipeline picks candidate edges from the
instance's own values, learns a forest on the training data, projects
training data and instance onto the forest's features and scores the
instance with smoothed TAN parameters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import lru_cache
from typing import Mapping

import numpy as np
from joblib import Parallel, delayed
from logzero import logger
from scipy.special import logsumexp

from .config import DEFAULT_JOBS, SMOOTHING
from .dataset import Dataset, Instance, resolve_positive_class, restrict
from .errors import ContractError, EmptyTrainingSetError, SchemaError
from .hierarchy import ClosureTable, FeatureDag
from .structure_learning import (
    CandidateMode,
    EdgeList,
    LearnedForest,
    MiMode,
    filter_candidates,
    hre_mst,
    max_spanning_forest,
    score_edges,
)


class AlgorithmKind(str, Enum):
    TAN = "tan"
    HRE_TAN = "hre-tan"
    HRE_TAN_MIX = "hre-tan-mix"
    HRE_TAN_PLUS = "hre-tan-plus"

    @property
    def mode(self) -> CandidateMode:
        if self is AlgorithmKind.HRE_TAN_MIX:
            return CandidateMode.MIX
        if self is AlgorithmKind.HRE_TAN_PLUS:
            return CandidateMode.PLUS
        return CandidateMode.ALL

    @property
    def hierarchical(self) -> bool:
        return self is not AlgorithmKind.TAN


@dataclass(frozen=True)
class TanParameters:
    labels: tuple[str, ...]
    class_prior: Mapping[str, float]
    root_cpt: Mapping[tuple[str, int, str], float]
    edge_cpt: Mapping[tuple[str, int, int, str], float]
    parent_of: Mapping[str, str | None]
    positive_class: str


@dataclass(frozen=True)
class Prediction:
    label: str
    posterior: Mapping[str, float]
    used_features: tuple[str, ...]
    fallback: bool
    forest: LearnedForest | None = field(default=None, repr=False, compare=False)


def fit_parameters(
    train_restricted: Dataset,
    forest: LearnedForest,
    positive_class: str | None = None,
    smoothing: float = SMOOTHING,
) -> TanParameters:
    """Add-one smoothed class prior and CPTs over the forest's features."""
    n = len(train_restricted)
    if n == 0:
        raise EmptyTrainingSetError("cannot fit parameters on an empty training set")
    if set(train_restricted.features) != set(forest.features):
        raise ContractError("training features do not match the forest's features")

    labels = train_restricted.labels
    label_array = train_restricted.label_array
    column = {f: j for j, f in enumerate(train_restricted.features)}
    values = train_restricted.matrix

    class_prior: dict[str, float] = {}
    root_cpt: dict[tuple[str, int, str], float] = {}
    edge_cpt: dict[tuple[str, int, int, str], float] = {}
    for label in labels:
        rows = values[label_array == label]
        n_c = len(rows)
        class_prior[label] = (n_c + smoothing) / (n + smoothing * len(labels))
        for feature in forest.features:
            x = rows[:, column[feature]]
            parent = forest.parent_of[feature]
            if parent is None:
                ones = int(x.sum())
                root_cpt[(feature, 1, label)] = (ones + smoothing) / (n_c + 2 * smoothing)
                root_cpt[(feature, 0, label)] = (n_c - ones + smoothing) / (n_c + 2 * smoothing)
                continue
            u = rows[:, column[parent]]
            for pv in (0, 1):
                given = u == pv
                n_pv = int(given.sum())
                ones = int(x[given].sum())
                edge_cpt[(feature, 1, pv, label)] = (ones + smoothing) / (n_pv + 2 * smoothing)
                edge_cpt[(feature, 0, pv, label)] = (n_pv - ones + smoothing) / (n_pv + 2 * smoothing)

    return TanParameters(
        labels=labels,
        class_prior=class_prior,
        root_cpt=root_cpt,
        edge_cpt=edge_cpt,
        parent_of=dict(forest.parent_of),
        positive_class=resolve_positive_class(train_restricted, positive_class),
    )


def posterior(params: TanParameters, inst_restricted: Instance) -> Prediction:
    """Normalised class posterior, scored in log space.

    Ties go to the larger prior, then to the lexicographically smaller label.
    """
    values = inst_restricted.values
    missing = [f for f in params.parent_of if f not in values]
    if missing:
        raise ContractError(f"instance has no value for {missing[0]!r}")

    scores = []
    for label in params.labels:
        score = math.log(params.class_prior[label])
        for feature, parent in params.parent_of.items():
            v = values[feature]
            if parent is None:
                score += math.log(params.root_cpt[(feature, v, label)])
            else:
                score += math.log(params.edge_cpt[(feature, v, values[parent], label)])
        scores.append(score)

    scores = np.asarray(scores)
    probs = np.exp(scores - logsumexp(scores))
    best = scores.max()
    tied = [lab for lab, s in zip(params.labels, scores) if s >= best - 1e-12 * max(1.0, abs(best))]
    label = min(tied, key=lambda lab: (-params.class_prior[lab], lab))
    return Prediction(
        label=label,
        posterior={lab: float(p) for lab, p in zip(params.labels, probs)},
        used_features=tuple(params.parent_of),
        fallback=not params.parent_of,
    )


@lru_cache(maxsize=16)
def _all_pairs(n: int) -> tuple[np.ndarray, np.ndarray]:
    a, b = np.triu_indices(n, k=1)
    a, b = a.astype(np.int64), b.astype(np.int64)
    a.setflags(write=False)
    b.setflags(write=False)
    return a, b


def _check_schema(train: Dataset, features: tuple[str, ...], dag: FeatureDag) -> None:
    if tuple(features) != tuple(train.features):
        raise SchemaError("test features do not match training features")
    absent = [f for f in train.features if f not in dag]
    if absent:
        raise SchemaError(f"features absent from hierarchy: {absent[:5]}")


def lazy_classify(
    train: Dataset,
    inst: Instance,
    algo: AlgorithmKind,
    dag: FeatureDag,
    closure: ClosureTable,
    *,
    mi_mode: MiMode = MiMode.CONDITIONAL,
    positive_class: str | None = None,
) -> Prediction:
    """Learn a structure for this one instance and classify it.

    All edge statuses live in a fresh EdgeSet, so successive calls never
    see each other's removals.
    """
    algo = AlgorithmKind(algo)
    _check_schema(train, inst.features, dag)

    edges = EdgeList(train.features, *_all_pairs(len(train.features)))
    cands = filter_candidates(edges, inst, algo.mode, closure if algo.hierarchical else None)
    cands = score_edges(cands, train, mi_mode)
    forest = hre_mst(cands, closure) if algo.hierarchical else max_spanning_forest(cands)

    params = fit_parameters(restrict(train, forest.features), forest, positive_class)
    prediction = posterior(params, restrict(inst, forest.features))
    return replace(prediction, forest=forest)


def classify_testset(
    train: Dataset,
    test: Dataset,
    algo: AlgorithmKind,
    dag: FeatureDag,
    closure: ClosureTable,
    *,
    mi_mode: MiMode = MiMode.CONDITIONAL,
    positive_class: str | None = None,
    n_jobs: int = DEFAULT_JOBS,
) -> list[Prediction]:
    algo = AlgorithmKind(algo)
    _check_schema(train, test.features, dag)
    if len(test) == 0:
        return []
    # shared per-fold state is computed once, before any worker reads it
    _ = train.pair_counts
    if algo.hierarchical:
        closure.relation_matrix(train.features)

    instances = test.instances
    logger.info("Classifying %d instances with %s (jobs=%d)", len(instances), algo.value, n_jobs)
    kwargs = {"mi_mode": mi_mode, "positive_class": positive_class}
    if n_jobs == 1:
        return [lazy_classify(train, inst, algo, dag, closure, **kwargs) for inst in instances]
    return Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(lazy_classify)(train, inst, algo, dag, closure, **kwargs) for inst in instances
    )
