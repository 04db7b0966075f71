"""Command-line entry point: validate, eval, correlate, compare and synth."""

from __future__ import annotations

import argparse
import io
import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import logzero
from logzero import logger

from .classifier import AlgorithmKind
from .config import DEFAULT_FOLDS, DEFAULT_JOBS, DEFAULT_SEED, DISPLAY_DECIMALS
from .dataset import load_dataset, stratified_folds, validate_consistency
from .errors import ConfigError, ConsistencyError, ContractError, HreTanError, InputEncodingError
from .evaluation import compare_reports, correlate, cross_validate, load_imbalance_overrides, load_reports
from .hierarchy import build_closure, load_hierarchy
from .structure_learning import MiMode
from .synthgen import SynthConfig, generate, write_synth

COMMANDS = ("validate", "eval", "correlate", "compare", "synth")


@dataclass
class RunConfig:
    command: str
    hierarchy_path: Path | None = None
    data_path: Path | None = None
    out_path: Path | None = None
    algorithm: AlgorithmKind | None = None
    folds: int = DEFAULT_FOLDS
    seed: int = DEFAULT_SEED
    positive_class: str | None = None
    mi_mode: MiMode = MiMode.CONDITIONAL
    strict: bool = False
    jobs: int = DEFAULT_JOBS
    dump_structure: Path | None = None
    folds_out: Path | None = None
    reports_dir: Path | None = None
    imbalance_path: Path | None = None
    scatter_path: Path | None = None
    verbose: int = 0
    synth: SynthConfig | None = None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hretan", description="Hierarchical redundancy eliminated TAN classifiers")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="-v for progress, -vv for debug detail")
    sub = parser.add_subparsers(dest="command", required=True)

    validate = sub.add_parser("validate", help="check a dataset against its feature hierarchy")
    validate.add_argument("--hierarchy", type=Path, required=True)
    validate.add_argument("--data", type=Path, required=True)
    validate.add_argument("--strict", action="store_true", help="exit 1 when any violation is found")

    ev = sub.add_parser("eval", help="stratified cross-validation of one algorithm")
    ev.add_argument("--hierarchy", type=Path, required=True)
    ev.add_argument("--data", type=Path, required=True)
    ev.add_argument("--algorithm", choices=[a.value for a in AlgorithmKind], required=True)
    ev.add_argument("--folds", type=int, default=DEFAULT_FOLDS)
    ev.add_argument("--seed", type=int, default=DEFAULT_SEED)
    ev.add_argument("--positive-class")
    ev.add_argument("--mi", choices=[m.value for m in MiMode], default=MiMode.CONDITIONAL.value)
    ev.add_argument("--jobs", type=int, default=DEFAULT_JOBS)
    ev.add_argument("--dump-structure", type=Path)
    ev.add_argument("--folds-out", type=Path)
    ev.add_argument("--out", type=Path, required=True)

    corr = sub.add_parser("correlate", help="imbalance degree vs GMean over saved reports")
    corr.add_argument("--reports", type=Path, required=True)
    corr.add_argument("--imbalance", type=Path, help="CSV overriding imbalance degrees per dataset")
    corr.add_argument("--out", type=Path, required=True)
    corr.add_argument("--scatter", type=Path, help="scatter CSV (default: --out with .csv suffix)")

    comp = sub.add_parser("compare", help="winners and pairwise Wilcoxon tests over saved reports")
    comp.add_argument("--reports", type=Path, required=True)
    comp.add_argument("--out", type=Path, required=True)

    synth = sub.add_parser("synth", help="write a random hierarchy and a consistent dataset")
    synth.add_argument("--out", type=Path, required=True)
    synth.add_argument("--n-features", type=int, default=SynthConfig.n_features)
    synth.add_argument("--n-instances", type=int, default=SynthConfig.n_instances)
    synth.add_argument("--max-parents", type=int, default=SynthConfig.max_parents)
    synth.add_argument("--depth", type=int, default=SynthConfig.depth)
    synth.add_argument("--imbalance", type=float, default=SynthConfig.imbalance)
    synth.add_argument("--strength", type=float, default=SynthConfig.dependence_strength)
    synth.add_argument("--seed", type=int, default=DEFAULT_SEED)
    return parser


def parse_args(argv: Sequence[str] | None = None) -> RunConfig:
    args = build_parser().parse_args(argv)
    config = RunConfig(command=args.command, verbose=args.verbose)
    if args.command in ("validate", "eval"):
        config.hierarchy_path = args.hierarchy
        config.data_path = args.data
    if args.command == "validate":
        config.strict = args.strict
    elif args.command == "eval":
        config.algorithm = AlgorithmKind(args.algorithm)
        config.folds = args.folds
        config.seed = args.seed
        config.positive_class = args.positive_class
        config.mi_mode = MiMode(args.mi)
        config.jobs = args.jobs
        config.dump_structure = args.dump_structure
        config.folds_out = args.folds_out
        config.out_path = args.out
    elif args.command in ("correlate", "compare"):
        config.reports_dir = args.reports
        config.out_path = args.out
        if args.command == "correlate":
            config.imbalance_path = args.imbalance
            config.scatter_path = args.scatter
    elif args.command == "synth":
        config.out_path = args.out
        config.seed = args.seed
        config.synth = SynthConfig(
            n_features=args.n_features,
            n_instances=args.n_instances,
            max_parents=args.max_parents,
            depth=args.depth,
            imbalance=args.imbalance,
            dependence_strength=args.strength,
            seed=args.seed,
        )
    return config


def _read_text(path: Path | None, what: str) -> str:
    if path is None:
        raise ConfigError(f"{what} path is required")
    try:
        return Path(path).read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise InputEncodingError(path, exc.start) from None
    except OSError as exc:
        raise ConfigError(f"cannot read {what} {path}: {exc.strerror or exc}") from None


def _load_inputs(config: RunConfig):
    dag = load_hierarchy(io.StringIO(_read_text(config.hierarchy_path, "hierarchy")))
    ds = load_dataset(io.StringIO(_read_text(config.data_path, "dataset")), name=Path(config.data_path).stem)
    return dag, ds


def _write(path: Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _run_validate(config: RunConfig) -> int:
    dag, ds = _load_inputs(config)
    violations = validate_consistency(ds, build_closure(dag))
    for v in violations:
        print(f"row {v.instance}\t{v.feature}\tmissing ancestor {v.ancestor}")
    print(f"{len(violations)} violations")
    if violations and config.strict:
        raise ConsistencyError(f"{len(violations)} hierarchy consistency violations in {ds.name}")
    return 0


def _run_eval(config: RunConfig) -> int:
    if config.algorithm is None:
        raise ConfigError("eval requires --algorithm")
    if config.jobs == 0:
        raise ConfigError("--jobs must be nonzero")
    dag, ds = _load_inputs(config)
    closure = build_closure(dag)
    folds = stratified_folds(ds, config.folds, config.seed)
    if config.folds_out is not None:
        _write(config.folds_out, folds.to_json() + "\n")
    report = cross_validate(
        ds,
        config.algorithm,
        dag,
        closure,
        config.folds,
        config.seed,
        config.positive_class,
        mi_mode=config.mi_mode,
        n_jobs=config.jobs,
        dump_structure=config.dump_structure,
        folds=folds,
    )
    _write(config.out_path, report.to_json() + "\n")
    print(report.summary(DISPLAY_DECIMALS))
    return 0


def _run_correlate(config: RunConfig) -> int:
    reports = load_reports(config.reports_dir)
    overrides = load_imbalance_overrides(config.imbalance_path) if config.imbalance_path else None
    results, scatter = correlate(reports, overrides)
    payload = {algorithm: result._asdict() for algorithm, result in results.items()}
    _write(config.out_path, json.dumps(payload, indent=2, sort_keys=True) + "\n")
    scatter_path = config.scatter_path or Path(config.out_path).with_suffix(".csv")
    Path(scatter_path).parent.mkdir(parents=True, exist_ok=True)
    scatter[["algorithm", "dataset", "imbalance_degree", "gmean"]].to_csv(scatter_path, index=False, lineterminator="\n")
    for algorithm, result in results.items():
        print(f"{algorithm} r={result.r:.3g} slope={result.slope:.3g} intercept={result.intercept:.3g} n={result.n}")
    return 0


def _run_compare(config: RunConfig) -> int:
    result = compare_reports(load_reports(config.reports_dir))
    _write(config.out_path, json.dumps(result, indent=2, sort_keys=True) + "\n")
    for algorithm, wins in sorted(result["wins"].items()):
        print(f"{algorithm} wins={wins}")
    return 0


def _run_synth(config: RunConfig) -> int:
    dag, ds = generate(config.synth or SynthConfig(seed=config.seed))
    hierarchy_path, data_path = write_synth(dag, ds, config.out_path)
    print(f"{hierarchy_path}\n{data_path}")
    return 0


HANDLERS = {
    "validate": _run_validate,
    "eval": _run_eval,
    "correlate": _run_correlate,
    "compare": _run_compare,
    "synth": _run_synth,
}


def run(config: RunConfig) -> int:
    """Execute one command; any failure becomes a JSON line on stderr and its exit code."""
    logzero.loglevel({0: logging.WARNING, 1: logging.INFO}.get(config.verbose, logging.DEBUG))
    try:
        if config.command not in HANDLERS:
            raise ConfigError(f"unknown command {config.command!r}; expected one of {list(COMMANDS)}")
        return HANDLERS[config.command](config)
    except HreTanError as exc:
        logger.debug("%s failed: %s", config.command, exc)
        sys.stderr.write(json.dumps(exc.to_dict()) + "\n")
        return exc.exit_code
    except Exception as exc:
        logger.exception("%s failed unexpectedly", config.command)
        error = ContractError(f"{type(exc).__name__}: {exc}")
        sys.stderr.write(json.dumps(error.to_dict()) + "\n")
        return error.exit_code


def main(argv: Sequence[str] | None = None) -> int:
    return run(parse_args(argv))
