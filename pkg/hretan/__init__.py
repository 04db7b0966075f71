"""Tree-augmented naive Bayes with hierarchical redundancy elimination."""

from .classifier import AlgorithmKind, Prediction, classify_testset, lazy_classify
from .dataset import Dataset, Instance, load_dataset, stratified_folds, validate_consistency
from .evaluation import EvalReport, cross_validate, pearson_and_fit, wilcoxon_signed_rank
from .hierarchy import ClosureTable, FeatureDag, build_closure, load_hierarchy

__all__ = [
    "AlgorithmKind",
    "ClosureTable",
    "Dataset",
    "EvalReport",
    "FeatureDag",
    "Instance",
    "Prediction",
    "build_closure",
    "classify_testset",
    "cross_validate",
    "lazy_classify",
    "load_dataset",
    "load_hierarchy",
    "pearson_and_fit",
    "stratified_folds",
    "validate_consistency",
    "wilcoxon_signed_rank",
]
