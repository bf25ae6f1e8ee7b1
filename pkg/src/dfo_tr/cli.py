"""Experiment harness and command-line entry point.

Subcommands::

    dfo-tr bench NAME            benchmark gaps at fixed checkpoints
    dfo-tr auc [DATASET]         cross-validated AUC maximization
    dfo-tr random-search TARGET  the random-search baseline on a benchmark or dataset
    dfo-tr tune --command CMD --param name:lo:hi[:log] ...

Every CSV starts with a commented header holding the full configuration.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import shlex
import sys
import time
from collections.abc import Iterable, Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict
from pathlib import Path
from typing import Literal

import numpy as np
from pydantic import BaseModel

from .baselines import hinge_gd, random_search
from .blackbox import DEFAULT_TIMEOUT, ExternalObjective, ParameterSpace
from .config import (
    DatasetConfig,
    ExperimentConfig,
    SampleSchedule,
    SolverConfig,
    load_experiment_config,
)
from .core import Negated, TimedObjective
from .data import LabeledDataset, load_libsvm, make_folds, scale_to_unit_interval, split
from .errors import DFOTRConfigError, DFOTRError
from .objectives import BENCHMARKS, AUCObjective, auc
from .solver import RunHistory, minimize, minimize_stochastic

logger = logging.getLogger(__name__)

DEFAULT_CONFIG = "experiments.yaml"
STOCHASTIC_REPEATS = 4

Mode = Literal["deterministic", "stochastic"]
Method = Literal["dfo-tr", "hinge", "random-search"]


def task_seed(*parts: int) -> int:
    """Derive an independent unsigned seed from integer coordinates."""
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


def _pool_map(fn, items: Sequence, workers: int) -> list:
    """Apply ``fn`` over ``items`` with a bounded pool; results keep input order."""
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# Benchmarks


class BenchmarkRow(BaseModel):
    benchmark: str
    method: str
    seed: int
    budget: int
    checkpoints: list[int]
    gaps: list[float]


def run_benchmark(
    name: str,
    budget: int | None = None,
    seeds: Iterable[int] = (0,),
    methods: Sequence[str] = ("dfo-tr", "random-search"),
    budget_multiplier: int = 1,
    workers: int = 1,
) -> list[BenchmarkRow]:
    """Run each method per seed and report ``f_best - f_opt`` at the checkpoints.

    DFO-TR starts from the origin and runs unconstrained; random search draws
    from the benchmark's box with ``budget * budget_multiplier`` evaluations,
    reported at the checkpoints scaled by the same multiplier.

    Raises:
        DFOTRConfigError: For an unknown benchmark name or method.
    """
    bench = BENCHMARKS.get(name)
    if bench is None:
        raise DFOTRConfigError(
            f"unknown benchmark {name!r}; choose from {', '.join(sorted(BENCHMARKS))}"
        )
    unknown = set(methods) - {"dfo-tr", "random-search"}
    if unknown:
        raise DFOTRConfigError(f"unsupported benchmark methods: {sorted(unknown)}")
    if budget_multiplier < 1:
        raise DFOTRConfigError("budget multiplier must be at least 1")
    budget = budget or bench.budget
    tasks = [(method, seed) for seed in seeds for method in methods]

    def _one(task: tuple[str, int]) -> BenchmarkRow:
        method, seed = task
        if method == "dfo-tr":
            config = SolverConfig(max_evals=budget, seed=seed)
            history = minimize(bench.objective(), np.zeros(bench.dim), config)
            scale = 1
        else:
            scale = budget_multiplier
            history = random_search(bench.objective(), bench.box, budget * scale, seed=seed)
        gaps = [
            bench.gap(history.best_after(min(c * scale, history.evals_used)))
            for c in bench.checkpoints
        ]
        return BenchmarkRow(
            benchmark=name,
            method=method,
            seed=seed,
            budget=history.evals_used,
            checkpoints=[c * scale for c in bench.checkpoints],
            gaps=gaps,
        )

    logger.info("Running benchmark %s: budget=%d tasks=%d", name, budget, len(tasks))
    rows = _pool_map(_one, tasks, workers)
    return sorted(rows, key=lambda r: (r.method, r.seed))


# AUC experiments


class AUCRun(BaseModel):
    """Outcome of one fold of one seed/repeat."""

    dataset: str
    method: str
    mode: str
    seed: int
    repeat: int
    fold: int
    evals: int
    sampled_points: int
    train_auc: float
    test_auc: float
    optimizer_seconds: float


class AUCSummary(BaseModel):
    dataset: str
    method: str
    mode: str
    budget: int
    mean: float
    std: float
    optimizer_seconds: float
    runs: list[AUCRun]


def load_dataset(entry: DatasetConfig, experiment: ExperimentConfig) -> LabeledDataset:
    """Load and scale one configured dataset.

    Raises:
        DFOTRError: If the file is missing or malformed, with the path in the message.
    """
    path = experiment.resolve_path(entry)
    if not path.exists():
        raise DFOTRError(f"dataset '{entry.name}' not found at {path}")
    try:
        data = load_libsvm(path, positive_label=entry.positive_label)
    except DFOTRError as e:
        raise DFOTRError(f"dataset '{entry.name}' ({path}): {e}") from e
    data.require_both_classes()
    return scale_to_unit_interval(data, entry.scaling)


def run_auc(
    entry: DatasetConfig,
    experiment: ExperimentConfig,
    budget: int | None = None,
    mode: Mode = "deterministic",
    method: Method = "dfo-tr",
    seeds: Sequence[int] | None = None,
    repeats: int | None = None,
    workers: int | None = None,
    budget_multiplier: int = 1,
    trace_dir: str | Path | None = None,
    data: LabeledDataset | None = None,
    schedule: SampleSchedule | None = None,
) -> AUCSummary:
    """Cross-validated AUC maximization on one dataset.

    For every seed and repeat the data is split into stratified folds; each
    fold in turn is the test set while the optimizer maximizes training AUC.
    Deterministic DFO-TR starts at the origin and reports its best point;
    stochastic DFO-TR starts uniformly in [-1, 1]^d and reports the center
    with the best re-estimated value. Optimizer time excludes time spent
    evaluating the objective.
    """
    if mode not in ("deterministic", "stochastic"):
        raise DFOTRConfigError(f"unknown mode {mode!r}")
    if method not in ("dfo-tr", "hinge", "random-search"):
        raise DFOTRConfigError(f"unknown method {method!r}")
    if budget_multiplier < 1:
        raise DFOTRConfigError("budget multiplier must be at least 1")
    budget = budget or entry.budget
    seeds = list(seeds if seeds is not None else experiment.seeds)
    if repeats is None:
        repeats = STOCHASTIC_REPEATS if mode == "stochastic" else experiment.repeats
    workers = workers or experiment.workers
    data = data if data is not None else load_dataset(entry, experiment)
    logger.info(
        "AUC run on %s: d=%d N=%d method=%s mode=%s budget=%d",
        entry.name,
        data.dim,
        data.size,
        method,
        mode,
        budget,
    )

    tasks = []
    for seed in seeds:
        for repeat in range(repeats):
            plan = make_folds(data, k=experiment.folds, seed=task_seed(seed, repeat))
            tasks.extend((seed, repeat, fold, plan) for fold in range(experiment.folds))

    def _one(task) -> tuple[AUCRun, RunHistory]:
        seed, repeat, fold, plan = task
        train, test = split(data, plan, fold)
        run_seed = task_seed(seed, repeat, fold)
        start = time.perf_counter()
        eval_seconds = 0.0
        if method == "hinge":
            w, history = hinge_gd(train, budget=budget)
        else:
            objective = TimedObjective(Negated(AUCObjective(train)))
            if method == "random-search":
                box = [(-1.0, 1.0)] * data.dim
                history = random_search(
                    objective, box, budget * budget_multiplier, seed=run_seed
                )
                w = history.best.point
            elif mode == "deterministic":
                config = SolverConfig(max_evals=budget, seed=run_seed)
                history = minimize(objective, np.zeros(data.dim), config)
                w = history.best.point
            else:
                config = SolverConfig(max_evals=budget, seed=run_seed)
                w0 = np.random.default_rng(run_seed).uniform(-1.0, 1.0, data.dim)
                history = minimize_stochastic(objective, w0, config, schedule)
                w = history.reported.point
            eval_seconds = objective.eval_seconds
        elapsed = time.perf_counter() - start - eval_seconds
        run = AUCRun(
            dataset=entry.name,
            method=method,
            mode=mode,
            seed=seed,
            repeat=repeat,
            fold=fold,
            evals=history.evals_used,
            sampled_points=sum(history.sample_sizes) or history.evals_used * train.size,
            train_auc=auc(w, train),
            test_auc=auc(w, test),
            optimizer_seconds=max(elapsed, 0.0),
        )
        logger.debug(
            "%s seed=%d repeat=%d fold=%d test AUC=%.4f",
            entry.name,
            seed,
            repeat,
            fold,
            run.test_auc,
        )
        return run, history

    results = _pool_map(_one, tasks, workers)
    results.sort(key=lambda item: (item[0].seed, item[0].repeat, item[0].fold))

    if trace_dir is not None:
        trace_dir = Path(trace_dir)
        trace_dir.mkdir(parents=True, exist_ok=True)
        for run, history in results:
            name = (
                f"{run.dataset}-{run.method}-{run.mode}"
                f"-s{run.seed}-r{run.repeat}-f{run.fold}.csv"
            )
            (trace_dir / name).write_text(history.to_csv(), encoding="utf-8")

    runs = [run for run, _ in results]
    test_aucs = np.array([r.test_auc for r in runs])
    summary = AUCSummary(
        dataset=entry.name,
        method=method,
        mode=mode,
        budget=budget * (budget_multiplier if method == "random-search" else 1),
        mean=float(test_aucs.mean()),
        std=float(test_aucs.std()),
        optimizer_seconds=float(np.mean([r.optimizer_seconds for r in runs])),
        runs=runs,
    )
    logger.info(
        "%s %s/%s: test AUC %.4f +- %.4f over %d runs",
        entry.name,
        method,
        mode,
        summary.mean,
        summary.std,
        len(runs),
    )
    return summary


# External tuning


class TuneResult(BaseModel):
    method: str
    best_params: dict[str, float]
    best_value: float
    history: RunHistory
    evaluations: list[tuple[dict[str, float], float]]


def tune_external(
    command: Sequence[str],
    space: ParameterSpace,
    budget: int,
    seed: int = 0,
    timeout: float = DEFAULT_TIMEOUT,
    persistent: bool = False,
    method: Literal["dfo-tr", "random-search"] = "dfo-tr",
    w0: Sequence[float] | np.ndarray | None = None,
) -> TuneResult:
    """Maximize the number returned by an external command over ``space``.

    The optimizer works in internal coordinates (log10 for log-scaled
    parameters); DFO-TR starts from ``w0``, by default the box center.
    """
    if method not in ("dfo-tr", "random-search"):
        raise DFOTRConfigError(f"unknown tuning method {method!r}")
    with ExternalObjective(command, space, timeout=timeout, persistent=persistent) as external:
        objective = Negated(external)
        logger.info(
            "Tuning %s with %s: budget=%d params=%s",
            shlex.join(command),
            method,
            budget,
            space.names,
        )
        if method == "dfo-tr":
            start = space.center if w0 is None else w0
            history = minimize(objective, start, SolverConfig(max_evals=budget, seed=seed))
        else:
            history = random_search(objective, space.internal_box, budget, seed=seed)
        evaluations = list(external.evaluations)
    return TuneResult(
        method=method,
        best_params=space.to_external(history.best.point),
        best_value=-history.best.value,
        history=history,
        evaluations=evaluations,
    )


# CSV output


def format_csv(
    header: Mapping[str, object], columns: Sequence[str], rows: Iterable[Sequence]
) -> str:
    """Render rows as CSV preceded by ``# key: value`` comment lines."""
    buffer = io.StringIO()
    for key, value in header.items():
        buffer.write(f"# {key}: {value}\n")
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return buffer.getvalue()


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
        logger.info("Wrote %s", out)
    else:
        sys.stdout.write(text)


def _seed_list(args: argparse.Namespace) -> list[int]:
    return list(range(args.seed, args.seed + args.seeds))


def _header(args: argparse.Namespace, argv: Sequence[str]) -> dict[str, object]:
    header: dict[str, object] = {"command": "dfo-tr " + shlex.join(argv)}
    for key, value in sorted(vars(args).items()):
        if key not in ("handler", "log_level", "out", "seeds_given"):
            header[key] = value
    # Budget and seed vary per run and are listed above.
    for key, value in SolverConfig().to_dict().items():
        if key not in ("max_evals", "seed"):
            header[f"solver_{key}"] = value
    if getattr(args, "mode", None) == "stochastic":
        for key, value in asdict(SampleSchedule()).items():
            header[f"schedule_{key}"] = value
    return header


def _bench_rows(rows: list[BenchmarkRow]) -> tuple[list[str], list[list]]:
    columns = ["benchmark", "method", "seed", "evals"]
    columns += [f"gap_at_{i + 1}" for i in range(len(rows[0].checkpoints))] if rows else []
    columns += [f"checkpoint_{i + 1}" for i in range(len(rows[0].checkpoints))] if rows else []
    table = [
        [r.benchmark, r.method, r.seed, r.budget, *r.gaps, *r.checkpoints] for r in rows
    ]
    return columns, table


def _summary_rows(
    summaries: list[AUCSummary], timing: bool
) -> tuple[list[str], list[list]]:
    columns = ["dataset", "method", "mode", "budget", "mean_auc", "std_auc", "runs"]
    if timing:
        columns.append("optimizer_seconds")
    table = []
    for s in summaries:
        row = [s.dataset, s.method, s.mode, s.budget, s.mean, s.std, len(s.runs)]
        if timing:
            row.append(s.optimizer_seconds)
        table.append(row)
    return columns, table


def _selected_datasets(
    experiment: ExperimentConfig, name: str | None, big: bool
) -> list[DatasetConfig]:
    if name is not None:
        entry = experiment.dataset(name)
        if entry.big and not big:
            raise DFOTRConfigError(f"dataset '{name}' is marked big; pass --big to run it")
        return [entry]
    return [d for d in experiment.datasets if big or not d.big]


def _auc_summaries(
    args: argparse.Namespace,
    method: Method,
    datasets: list[DatasetConfig],
    experiment: ExperimentConfig,
) -> list[AUCSummary]:
    summaries = []
    for entry in datasets:
        if args.dataset is None and not experiment.resolve_path(entry).exists():
            logger.warning(
                "Skipping %s: %s not found", entry.name, experiment.resolve_path(entry)
            )
            continue
        summaries.append(
            run_auc(
                entry,
                experiment,
                budget=args.budget,
                mode=args.mode,
                method=method,
                seeds=_seed_list(args) if args.seeds_given else None,
                repeats=args.repeats,
                workers=args.workers,
                budget_multiplier=args.budget_multiplier,
                trace_dir=args.trace,
            )
        )
    return summaries


def _cmd_bench(args: argparse.Namespace, argv: Sequence[str]) -> int:
    rows = run_benchmark(
        args.name,
        budget=args.budget,
        seeds=_seed_list(args),
        budget_multiplier=args.budget_multiplier,
        workers=args.workers or 1,
    )
    columns, table = _bench_rows(rows)
    _emit(format_csv(_header(args, argv), columns, table), args.out)
    return 0


def _cmd_auc(args: argparse.Namespace, argv: Sequence[str]) -> int:
    experiment = load_experiment_config(args.config)
    datasets = _selected_datasets(experiment, args.dataset, args.big)
    summaries = _auc_summaries(args, args.method, datasets, experiment)
    columns, table = _summary_rows(summaries, timing=not args.no_timing)
    _emit(format_csv(_header(args, argv), columns, table), args.out)
    return 0


def _cmd_random_search(args: argparse.Namespace, argv: Sequence[str]) -> int:
    if args.target in BENCHMARKS:
        rows = run_benchmark(
            args.target,
            budget=args.budget,
            seeds=_seed_list(args),
            methods=("random-search",),
            budget_multiplier=args.budget_multiplier,
            workers=args.workers or 1,
        )
        columns, table = _bench_rows(rows)
    else:
        experiment = load_experiment_config(args.config)
        args.dataset = args.target
        datasets = _selected_datasets(experiment, args.target, args.big)
        summaries = _auc_summaries(args, "random-search", datasets, experiment)
        columns, table = _summary_rows(summaries, timing=not args.no_timing)
    _emit(format_csv(_header(args, argv), columns, table), args.out)
    return 0


def _cmd_tune(args: argparse.Namespace, argv: Sequence[str]) -> int:
    space = ParameterSpace.parse(args.param)
    result = tune_external(
        shlex.split(args.command),
        space,
        budget=args.budget,
        seed=args.seed,
        timeout=args.timeout,
        persistent=args.persistent,
        method=args.method,
    )
    header = _header(args, argv)
    header["best"] = space.format_request(result.best_params)
    header["best_value"] = repr(result.best_value)
    columns = ["eval", *space.names, "response"]
    table = [
        [i, *(params[n] for n in space.names), value]
        for i, (params, value) in enumerate(result.evaluations, start=1)
    ]
    _emit(format_csv(header, columns, table), args.out)
    return 0


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dfo-tr", description="Trust-region derivative-free optimization experiments"
    )
    parser.add_argument(
        "--log-level",
        default="WARNING",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        help="logging level (default: WARNING)",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--budget", type=_positive_int, help="function evaluations per run")
        p.add_argument("--seed", type=int, default=0, help="first seed")
        p.add_argument("--seeds", type=_positive_int, default=None, help="number of seeds")
        p.add_argument("--workers", type=_positive_int, default=None, help="worker pool width")
        p.add_argument("--budget-multiplier", type=_positive_int, default=1)
        p.add_argument("--out", help="write CSV here instead of stdout")

    def auc_options(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", default=DEFAULT_CONFIG, help="experiment YAML file")
        p.add_argument("--mode", choices=["deterministic", "stochastic"], default="deterministic")
        p.add_argument("--repeats", type=_positive_int, default=None)
        p.add_argument("--big", action="store_true", help="include large datasets")
        p.add_argument("--trace", help="directory for per-run history CSVs")
        p.add_argument("--no-timing", action="store_true", help="omit the optimizer time column")

    bench = sub.add_parser("bench", help="benchmark functions")
    bench.add_argument("name", choices=sorted(BENCHMARKS))
    common(bench)
    bench.set_defaults(handler=_cmd_bench)

    auc_cmd = sub.add_parser("auc", help="AUC maximization with cross-validation")
    auc_cmd.add_argument("dataset", nargs="?", help="dataset name from the config (default: all)")
    auc_cmd.add_argument("--method", choices=["dfo-tr", "hinge"], default="dfo-tr")
    common(auc_cmd)
    auc_options(auc_cmd)
    auc_cmd.set_defaults(handler=_cmd_auc)

    rs = sub.add_parser("random-search", help="random-search baseline")
    rs.add_argument("target", help="benchmark name or dataset name")
    common(rs)
    auc_options(rs)
    rs.set_defaults(handler=_cmd_random_search)

    tune = sub.add_parser("tune", help="tune an external black-box")
    tune.add_argument("--command", required=True, help="command line of the black-box")
    tune.add_argument(
        "--param",
        action="append",
        required=True,
        help="parameter as name:lo:hi or name:lo:hi:log (repeatable)",
    )
    tune.add_argument("--method", choices=["dfo-tr", "random-search"], default="dfo-tr")
    tune.add_argument("--timeout", type=float, default=DEFAULT_TIMEOUT)
    tune.add_argument("--persistent", action="store_true", help="keep one process alive")
    common(tune)
    tune.set_defaults(handler=_cmd_tune)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, args.log_level),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    args.seeds_given = args.seeds is not None
    if args.seeds is None:
        args.seeds = 1
    if args.subcommand == "tune" and args.budget is None:
        args.budget = 60

    try:
        return args.handler(args, argv)
    except DFOTRConfigError as e:
        logger.error("Configuration error: %s", e)
        parser.exit(2, f"dfo-tr: error: {e}\n")
    except DFOTRError as e:
        logger.error("Run failed: %s", e)
        print(f"dfo-tr: error: {e}", file=sys.stderr)
        return 1


__all__ = [
    "AUCRun",
    "AUCSummary",
    "BenchmarkRow",
    "TuneResult",
    "build_parser",
    "format_csv",
    "load_dataset",
    "main",
    "run_auc",
    "run_benchmark",
    "task_seed",
    "tune_external",
]
