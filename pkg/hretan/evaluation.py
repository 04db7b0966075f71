"""Cross-validation, GMean metrics, imbalance degree and the statistics used
to compare algorithms across datasets."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from itertools import combinations
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np
import pandas as pd
from logzero import logger
from scipy import stats

from .classifier import AlgorithmKind, Prediction, classify_testset
from .config import DEFAULT_JOBS, EXACT_WILCOXON_MAX_N, MIN_WILCOXON_N, REPORT_FORMAT_VERSION
from .dataset import Dataset, FoldAssignment, class_counts, resolve_positive_class, stratified_folds
from .errors import (
    ConfigError,
    DegenerateVarianceError,
    FoldError,
    InsufficientDataError,
    ReportFormatError,
    UndefinedMetricError,
)
from .hierarchy import ClosureTable, FeatureDag
from .structure_learning import MiMode


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp, self.tn + other.tn, self.fn + other.fn)

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


class CorrelationResult(NamedTuple):
    r: float
    slope: float
    intercept: float
    n: int


class WilcoxonResult(NamedTuple):
    statistic: float
    p_value: float
    n_effective: int
    method: str


@dataclass
class EvalReport:
    algorithm: str
    dataset: str
    positive_class: str
    seed: int
    folds: int
    per_fold: list[ConfusionCounts]
    sensitivity: float
    specificity: float
    gmean: float
    sensitivity_se: float | None
    specificity_se: float | None
    imbalance_degree: float
    mi_mode: str = MiMode.CONDITIONAL.value
    mean_used_features: float = 0.0
    fallback_count: int = 0
    format_version: str = REPORT_FORMAT_VERSION
    predictions: list[Prediction] = field(default_factory=list, repr=False, compare=False)

    def to_dict(self) -> dict:
        data = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "predictions"}
        data["per_fold"] = [asdict(c) for c in self.per_fold]
        return data

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def summary(self, decimals: int = 1) -> str:
        def pm(value: float, se: float | None) -> str:
            return f"{value:.{decimals}f}±{(se or 0.0):.{decimals}f}"

        return (
            f"{self.algorithm} {pm(self.sensitivity, self.sensitivity_se)} "
            f"{pm(self.specificity, self.specificity_se)} {self.gmean:.{decimals}f}"
        )


def metrics(counts: ConfusionCounts) -> tuple[float, float, float]:
    """(sensitivity, specificity, gmean) on the 0-100 scale."""
    if counts.tp + counts.fn < 1:
        raise UndefinedMetricError("sensitivity is undefined: no positive instances evaluated")
    if counts.tn + counts.fp < 1:
        raise UndefinedMetricError("specificity is undefined: no negative instances evaluated")
    sensitivity = 100.0 * counts.tp / (counts.tp + counts.fn)
    specificity = 100.0 * counts.tn / (counts.tn + counts.fp)
    return sensitivity, specificity, gmean(sensitivity, specificity)


def gmean(sensitivity: float, specificity: float) -> float:
    return math.sqrt(sensitivity * specificity)


def imbalance_degree(n_label1: int, n_label2: int) -> float:
    """1 - minority/majority; 0 for balanced classes."""
    if n_label1 < 1 or n_label2 < 1:
        raise ConfigError(f"imbalance degree needs both counts >= 1, got ({n_label1}, {n_label2})")
    return 1.0 - min(n_label1, n_label2) / max(n_label1, n_label2)


def confusion_counts(truth: Sequence[str], predicted: Sequence[str], positive_class: str) -> ConfusionCounts:
    tp = fp = tn = fn = 0
    for actual, guess in zip(truth, predicted):
        if actual == positive_class:
            if guess == positive_class:
                tp += 1
            else:
                fn += 1
        elif guess == positive_class:
            fp += 1
        else:
            tn += 1
    return ConfusionCounts(tp, fp, tn, fn)


def standard_error(values: Sequence[float]) -> float | None:
    values = [v for v in values if v is not None]
    if len(values) < 2:
        return None
    return float(np.std(values, ddof=1) / math.sqrt(len(values)))


def cross_validate(
    ds: Dataset,
    algo: AlgorithmKind,
    dag: FeatureDag,
    closure: ClosureTable,
    k: int,
    seed: int,
    positive_class: str | None = None,
    *,
    mi_mode: MiMode = MiMode.CONDITIONAL,
    n_jobs: int = DEFAULT_JOBS,
    dump_structure: Path | None = None,
    folds: FoldAssignment | None = None,
) -> EvalReport:
    """Stratified k-fold evaluation; metrics come from counts pooled over folds."""
    algo = AlgorithmKind(algo)
    positive = resolve_positive_class(ds, positive_class)
    assignment = folds or stratified_folds(ds, k, seed)
    if dump_structure is not None:
        dump_structure.mkdir(parents=True, exist_ok=True)

    per_fold: list[ConfusionCounts] = []
    fold_sens: list[float] = []
    fold_spec: list[float] = []
    used_sizes: list[int] = []
    fallbacks = 0
    all_predictions: list[Prediction] = []
    for fold, test_idx in enumerate(assignment.folds()):
        held_out = set(test_idx)
        train_idx = [i for i in range(len(ds)) if i not in held_out]
        train, test = ds.subset(train_idx), ds.subset(test_idx)
        present = set(train.label_array)
        for label in ds.labels:
            if label not in present:
                raise FoldError(f"fold {fold}: training split has no instances of class {label!r}")

        predictions = classify_testset(
            train, test, algo, dag, closure, mi_mode=mi_mode, positive_class=positive, n_jobs=n_jobs
        )
        counts = confusion_counts(list(test.label_array), [p.label for p in predictions], positive)
        per_fold.append(counts)
        if counts.tp + counts.fn:
            fold_sens.append(100.0 * counts.tp / (counts.tp + counts.fn))
        if counts.tn + counts.fp:
            fold_spec.append(100.0 * counts.tn / (counts.tn + counts.fp))
        used_sizes.extend(len(p.used_features) for p in predictions)
        fallbacks += sum(p.fallback for p in predictions)
        all_predictions.extend(predictions)

        if dump_structure is not None:
            for index, prediction in zip(test_idx, predictions):
                path = dump_structure / f"{algo.value}_fold{fold:02d}_instance{index:05d}.json"
                path.write_text(prediction.forest.to_json() if prediction.forest else "{}")

        logger.info("%s fold %d/%d: %s", algo.value, fold + 1, assignment.k, counts)

    pooled = sum(per_fold, ConfusionCounts())
    sensitivity, specificity, gm = metrics(pooled)
    sizes = class_counts(ds)
    return EvalReport(
        algorithm=algo.value,
        dataset=ds.name,
        positive_class=positive,
        seed=assignment.seed,
        folds=assignment.k,
        per_fold=per_fold,
        sensitivity=sensitivity,
        specificity=specificity,
        gmean=gm,
        sensitivity_se=standard_error(fold_sens),
        specificity_se=standard_error(fold_spec),
        imbalance_degree=imbalance_degree(*sizes.values()),
        mi_mode=MiMode(mi_mode).value,
        mean_used_features=float(np.mean(used_sizes)) if used_sizes else 0.0,
        fallback_count=int(fallbacks),
        predictions=all_predictions,
    )


def pearson_and_fit(points: Sequence[tuple[float, float]]) -> CorrelationResult:
    """Sample Pearson r plus the least-squares line y = slope * x + intercept."""
    points = list(points)
    if len(points) < 3:
        raise InsufficientDataError(f"correlation needs at least 3 points, got {len(points)}")
    x = np.array([p[0] for p in points], dtype=float)
    y = np.array([p[1] for p in points], dtype=float)
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        raise DegenerateVarianceError("x and y must both vary")
    fit = stats.linregress(x, y)
    return CorrelationResult(r=float(fit.rvalue), slope=float(fit.slope), intercept=float(fit.intercept), n=len(points))


def wilcoxon_signed_rank(a: Sequence[float], b: Sequence[float], method: str = "auto") -> WilcoxonResult:
    """Two-sided Wilcoxon signed-rank test on paired samples.

    Zero differences are dropped and tied magnitudes share average ranks.
    `method` is "exact" (enumerate every sign pattern), "approx" (normal with
    continuity and tie corrections) or "auto" (exact up to 15 pairs).
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise InsufficientDataError("paired samples must have equal length")
    diffs = a - b
    diffs = diffs[diffs != 0]
    n = len(diffs)
    if n < MIN_WILCOXON_N:
        raise InsufficientDataError(f"need at least {MIN_WILCOXON_N} nonzero differences, got {n}")

    ranks = stats.rankdata(np.abs(diffs))
    w_plus = float(ranks[diffs > 0].sum())
    w_minus = float(ranks[diffs < 0].sum())
    statistic = min(w_plus, w_minus)
    mean = ranks.sum() / 2.0

    if method == "auto":
        method = "exact" if n <= EXACT_WILCOXON_MAX_N else "approx"
    if method == "exact":
        signs = (np.arange(2**n)[:, None] >> np.arange(n)) & 1
        sums = signs @ ranks
        p_value = float(np.mean(np.abs(sums - mean) >= abs(w_plus - mean) - 1e-9))
    elif method == "approx":
        _, ties = np.unique(np.abs(diffs), return_counts=True)
        variance = n * (n + 1) * (2 * n + 1) / 24.0 - (ties**3 - ties).sum() / 48.0
        z = (statistic - mean + 0.5) / math.sqrt(variance)
        p_value = float(2.0 * stats.norm.cdf(z))
    else:
        raise ConfigError(f"unknown Wilcoxon method {method!r}")
    return WilcoxonResult(statistic=statistic, p_value=min(1.0, p_value), n_effective=n, method=method)


def bootstrap_gmean_interval(
    truth: Sequence[str],
    predicted: Sequence[str],
    positive_class: str,
    n_boot: int = 1000,
    seed: int = 0,
    level: float = 0.95,
) -> tuple[float, float]:
    """Percentile bootstrap interval of GMean over resampled predictions."""
    truth = np.asarray(truth, dtype=object)
    predicted = np.asarray(predicted, dtype=object)
    is_pos = truth == positive_class
    hit = truth == predicted
    rng = np.random.default_rng(seed)
    values = []
    for _ in range(n_boot):
        idx = rng.integers(0, len(truth), size=len(truth))
        pos, hits = is_pos[idx], hit[idx]
        if pos.all() or not pos.any():
            continue
        sens = 100.0 * hits[pos].mean()
        spec = 100.0 * hits[~pos].mean()
        values.append(gmean(sens, spec))
    if not values:
        raise InsufficientDataError("no bootstrap resample contained both classes")
    tail = 100.0 * (1.0 - level) / 2.0
    low, high = np.percentile(values, [tail, 100.0 - tail])
    return float(low), float(high)


REPORT_FIELDS = ("algorithm", "gmean")


def load_reports(directory: Path) -> list[dict]:
    if not Path(directory).is_dir():
        raise ConfigError(f"reports directory {directory} does not exist")
    reports = []
    for path in sorted(Path(directory).glob("*.json")):
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except UnicodeDecodeError as exc:
            raise ReportFormatError(f"{path}: not valid UTF-8 at byte {exc.start}") from None
        except json.JSONDecodeError as exc:
            raise ReportFormatError(f"{path}: line {exc.lineno}: {exc.msg}") from None
        if not isinstance(data, dict):
            raise ReportFormatError(f"{path}: expected a JSON object")
        missing = [name for name in REPORT_FIELDS if name not in data]
        if missing:
            raise ReportFormatError(f"{path}: missing field {missing[0]!r}")
        try:
            data["gmean"] = float(data["gmean"])
        except (TypeError, ValueError):
            raise ReportFormatError(f"{path}: gmean {data['gmean']!r} is not a number") from None
        data.setdefault("dataset", path.stem)
        reports.append(data)
    logger.info("Loaded %d reports from %s", len(reports), directory)
    return reports


def load_imbalance_overrides(path: Path) -> dict[str, float]:
    """CSV with `dataset` and `imbalance_degree` columns."""
    try:
        frame = pd.read_csv(path, dtype={"dataset": str}, encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError(f"imbalance file {path} does not exist") from None
    except (UnicodeDecodeError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise ConfigError(f"{path}: unreadable imbalance CSV: {exc}") from None
    if not {"dataset", "imbalance_degree"}.issubset(frame.columns):
        raise ConfigError(f"{path}: expected columns 'dataset' and 'imbalance_degree'")
    degrees = pd.to_numeric(frame["imbalance_degree"], errors="coerce")
    if degrees.isna().any():
        bad = frame.loc[degrees.isna(), "dataset"].iloc[0]
        raise ConfigError(f"{path}: imbalance degree for {bad!r} is not a number")
    return dict(zip(frame["dataset"], degrees.astype(float)))


def _reports_frame(reports: Iterable[Mapping]) -> pd.DataFrame:
    rows = []
    for r in reports:
        missing = [name for name in (*REPORT_FIELDS, "dataset") if name not in r]
        if missing:
            raise ReportFormatError(f"report {dict(r)!r:.80} is missing field {missing[0]!r}")
        rows.append(
            {
                "algorithm": r["algorithm"],
                "dataset": r["dataset"],
                "gmean": float(r["gmean"]),
                "imbalance_degree": r.get("imbalance_degree"),
            }
        )
    return pd.DataFrame(rows, columns=["algorithm", "dataset", "gmean", "imbalance_degree"])


def correlate(
    reports: Iterable[Mapping],
    overrides: Mapping[str, float] | None = None,
) -> tuple[dict[str, CorrelationResult], pd.DataFrame]:
    """Per-algorithm correlation between imbalance degree and GMean.

    Returns the fits and the scatter rows they were computed from.
    """
    frame = _reports_frame(reports)
    if overrides:
        mapped = frame["dataset"].map(overrides)
        frame["imbalance_degree"] = mapped.where(mapped.notna(), frame["imbalance_degree"])
    missing = frame[frame["imbalance_degree"].isna()]
    if not missing.empty:
        raise ConfigError(f"no imbalance degree for datasets {sorted(missing['dataset'])[:5]}")
    frame["imbalance_degree"] = frame["imbalance_degree"].astype(float)

    results = {}
    for algorithm, group in frame.groupby("algorithm", sort=True):
        results[algorithm] = pearson_and_fit(list(zip(group["imbalance_degree"], group["gmean"])))
    scatter = frame.sort_values(["algorithm", "dataset"]).reset_index(drop=True)
    return results, scatter


def compare_reports(reports: Iterable[Mapping]) -> dict:
    """Per-dataset winners plus pairwise Wilcoxon tests on GMean."""
    table = _reports_frame(reports).pivot_table(index="dataset", columns="algorithm", values="gmean", aggfunc="first")
    algorithms = list(table.columns)

    winners = {}
    wins = {algorithm: 0 for algorithm in algorithms}
    for dataset, row in table.iterrows():
        row = row.dropna()
        if row.empty:
            continue
        best = [a for a, v in row.items() if v == row.max()]
        winners[str(dataset)] = best
        for algorithm in best:
            wins[algorithm] += 1

    pairwise = []
    for first, second in combinations(algorithms, 2):
        both = table[[first, second]].dropna()
        entry = {"a": first, "b": second, "n": int(len(both)), "statistic": None, "p_value": None}
        try:
            result = wilcoxon_signed_rank(both[first], both[second])
            entry.update(statistic=result.statistic, p_value=result.p_value, n_effective=result.n_effective)
        except InsufficientDataError as exc:
            logger.warning("Skipping %s vs %s: %s", first, second, exc)
        pairwise.append(entry)

    return {"winners": winners, "wins": wins, "pairwise": pairwise}
