"""Seeded random hierarchies and hierarchy-consistent binary datasets."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np
import pandas as pd
from logzero import logger

from .config import (
    CLASS_COLUMN,
    SYNTH_BASE_RATE,
    SYNTH_MAJORITY_LABEL,
    SYNTH_MINORITY_LABEL,
    SYNTH_SIGNAL_RATE,
)
from .dataset import Dataset
from .errors import ConfigError
from .hierarchy import FeatureDag, build_closure, serialize_hierarchy


@dataclass(frozen=True)
class SynthConfig:
    n_features: int = 50
    n_instances: int = 100
    max_parents: int = 2
    depth: int = 4
    imbalance: float = 0.0
    dependence_strength: float = 0.5
    seed: int = 1


def class_sizes(n_instances: int, imbalance: float) -> tuple[int, int]:
    """(minority, majority) counts for a target imbalance degree.

    The minority share (1 - I) / (2 - I) is computed as an exact fraction of
    the decimal I and rounded half up to whole instances, so it lands within
    1/n_instances of the target share.
    """
    if not 0.0 <= imbalance < 1.0:
        raise ConfigError(f"imbalance must lie in [0, 1), got {imbalance}")
    target = Fraction(str(imbalance))
    share = (1 - target) / (2 - target)
    minor = math.floor(n_instances * share + Fraction(1, 2))
    minor, major = sorted((minor, n_instances - minor))
    if minor < 1:
        raise ConfigError(f"imbalance {imbalance} is unreachable with {n_instances} instances")
    return minor, major


def _layers(n_features: int, depth: int) -> list[np.ndarray]:
    depth = max(2, min(depth, n_features))
    n_roots = max(1, n_features // (2 * depth))
    rest = np.array_split(np.arange(n_roots, n_features), depth - 1)
    return [np.arange(n_roots)] + [layer for layer in rest if len(layer)]


def _random_dag(config: SynthConfig, rng: np.random.Generator) -> tuple[FeatureDag, list[np.ndarray]]:
    names = [f"GO:{i + 1:07d}" for i in range(config.n_features)]
    layers = _layers(config.n_features, config.depth)
    edges: set[tuple[str, str]] = set()
    for level in range(1, len(layers)):
        above = layers[level - 1]
        shallower = np.concatenate(layers[:level])
        for position, child in enumerate(layers[level]):
            # cycling over the layer above gives every root a child
            first = above[position % len(above)]
            wanted = int(rng.integers(1, config.max_parents + 1))
            extra = rng.choice(shallower, size=min(wanted, len(shallower)), replace=False)
            for parent in {int(first), *(int(p) for p in extra[: wanted - 1])}:
                edges.add((names[child], names[parent]))
    return FeatureDag(features=tuple(names), parent_edges=frozenset(edges)), layers


def generate(config: SynthConfig) -> tuple[FeatureDag, Dataset]:
    """Random layered DAG plus a dataset that is consistent with it.

    Each instance switches on some deep-ish features at random (planted
    features fire more often for their preferred class) and then switches on
    every ancestor of every positive feature.
    """
    if config.n_features < 2:
        raise ConfigError("n_features must be at least 2")
    if config.n_instances < 4:
        raise ConfigError("n_instances must be at least 4")
    if config.max_parents < 1:
        raise ConfigError("max_parents must be at least 1")
    if not 0.0 <= config.dependence_strength <= 1.0:
        raise ConfigError("dependence_strength must lie in [0, 1]")

    minor, major = class_sizes(config.n_instances, config.imbalance)
    rng = np.random.default_rng(config.seed)
    dag, layers = _random_dag(config, rng)
    closure = build_closure(dag)

    labels = np.array([SYNTH_MINORITY_LABEL] * minor + [SYNTH_MAJORITY_LABEL] * major, dtype=object)
    labels = labels[rng.permutation(len(labels))]

    p = config.n_features
    rate = np.zeros((2, p))
    non_roots = np.concatenate(layers[1:])
    rate[:, non_roots] = SYNTH_BASE_RATE
    deepest = layers[-1]
    planted = rng.choice(deepest, size=max(2, len(deepest) // 4) if len(deepest) >= 2 else 1, replace=False)
    strength = config.dependence_strength
    for k, feature in enumerate(planted):
        preferred = k % 2
        rate[preferred, feature] = SYNTH_BASE_RATE + strength * (SYNTH_SIGNAL_RATE - SYNTH_BASE_RATE)
        rate[1 - preferred, feature] = SYNTH_BASE_RATE * (1.0 - strength)

    ancestor = np.zeros((p, p), dtype=bool)
    for i, feature in enumerate(dag.features):
        for other in closure.ancestors[feature]:
            ancestor[i, dag.index[other]] = True

    row_rate = rate[(labels == SYNTH_MAJORITY_LABEL).astype(int)]
    seeds = rng.random((config.n_instances, p)) < row_rate
    values = seeds | ((seeds.astype(np.int64) @ ancestor.astype(np.int64)) > 0)

    frame = pd.DataFrame(values.astype(np.int8), columns=list(dag.features))
    frame[CLASS_COLUMN] = labels.astype(str)
    name = f"synth-seed{config.seed}"
    logger.info(
        "Generated %s: %d features, %d edges, %d %s / %d %s",
        name, p, len(dag.parent_edges), minor, SYNTH_MINORITY_LABEL, major, SYNTH_MAJORITY_LABEL,
    )
    ds = Dataset(frame=frame, labels=tuple(sorted((SYNTH_MINORITY_LABEL, SYNTH_MAJORITY_LABEL))), name=name)
    return dag, ds


def write_synth(dag: FeatureDag, ds: Dataset, out_dir: Path) -> tuple[Path, Path]:
    """Write `hierarchy.tsv` and `dataset.csv` under out_dir."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    hierarchy_path = out_dir / "hierarchy.tsv"
    data_path = out_dir / "dataset.csv"
    hierarchy_path.write_text(serialize_hierarchy(dag))
    ds.frame.to_csv(data_path, index=False, lineterminator="\n")
    logger.info("Wrote %s and %s", hierarchy_path, data_path)
    return hierarchy_path, data_path
