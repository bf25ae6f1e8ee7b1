"""Configuration classes for the DFO-TR solver and the experiment harness."""

from __future__ import annotations

import logging
import math
import os
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Literal

import yaml

from .errors import DFOTRConfigError

logger = logging.getLogger(__name__)

DEFAULT_DELTA_MIN = 1e-10
DEFAULT_EVALS_PER_DIM = 100

ScalingMode = Literal["none", "minmax", "standardize"]
AveragingRule = Literal["running", "pairwise"]


@dataclass(frozen=True)
class SolverConfig:
    """Parameters of the trust-region iteration.

    The solver minimizes; it stops once ``max_evals`` objective evaluations
    have been spent or the radius falls below ``delta_min``.
    """

    eta0: float = 0.001
    eta1: float = 0.75
    theta: float = 10.0
    gamma1: float = 0.98
    gamma2: float = 1.5
    delta0: float = 1.0
    delta_min: float = DEFAULT_DELTA_MIN
    max_evals: int = DEFAULT_EVALS_PER_DIM
    seed: int = 0
    # Rejected candidates dropped in a row before one replaces the farthest member.
    stall_limit: int = 1

    def __post_init__(self):
        """Validate the configuration"""
        for name in ("eta0", "eta1", "theta", "gamma1", "gamma2", "delta0", "delta_min"):
            value = getattr(self, name)
            if not isinstance(value, int | float) or not math.isfinite(value):
                raise DFOTRConfigError(f"{name} must be a finite number, got {value!r}")

        if not 0.0 < self.eta0 < self.eta1 < 1.0:
            raise DFOTRConfigError(
                f"Acceptance thresholds must satisfy 0 < eta0 < eta1 < 1, "
                f"got eta0={self.eta0}, eta1={self.eta1}"
            )
        if not 0.0 < self.gamma1 < 1.0 < self.gamma2:
            raise DFOTRConfigError(
                f"Radius factors must satisfy 0 < gamma1 < 1 < gamma2, "
                f"got gamma1={self.gamma1}, gamma2={self.gamma2}"
            )
        if self.theta <= 1.0:
            raise DFOTRConfigError(f"theta must be greater than 1, got {self.theta}")
        if self.delta0 <= 0.0:
            raise DFOTRConfigError(f"delta0 must be positive, got {self.delta0}")
        if self.delta_min < 0.0:
            raise DFOTRConfigError(
                f"delta_min must be non-negative, got {self.delta_min}"
            )
        if isinstance(self.max_evals, bool) or not isinstance(self.max_evals, int):
            raise DFOTRConfigError("max_evals must be an integer")
        if self.max_evals < 1:
            raise DFOTRConfigError(f"max_evals must be positive, got {self.max_evals}")
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) or self.seed < 0:
            raise DFOTRConfigError(f"seed must be an unsigned integer, got {self.seed!r}")
        if isinstance(self.stall_limit, bool) or not isinstance(self.stall_limit, int):
            raise DFOTRConfigError("stall_limit must be an integer")
        if self.stall_limit < 0:
            raise DFOTRConfigError(f"stall_limit must be non-negative, got {self.stall_limit}")

    def replace(self, **changes: Any) -> SolverConfig:
        """Return a validated copy with ``changes`` applied."""
        return replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def make_config_defaults(dim: int | None = None) -> SolverConfig:
    """Return the published default parameters.

    Args:
        dim: Problem dimension; the evaluation budget defaults to ``100 * dim``.

    Returns:
        SolverConfig with eta0=0.001, eta1=0.75, theta=10, gamma1=0.98,
        gamma2=1.5, delta0=1, delta_min=1e-10.
    """
    budget = DEFAULT_EVALS_PER_DIM * (dim if dim else 1)
    return SolverConfig(max_evals=budget)


@dataclass(frozen=True)
class SampleSchedule:
    """Per-class sample sizes of the subsampled (stochastic) variant.

    At iteration ``k`` a class of size ``N`` out of ``N_pos + N_neg`` examples
    is sampled at ``min(N, max(k * floor(slope * r) + floor(base * r),
    floor(min_fraction * N)))`` with ``r = N / (N_pos + N_neg)``.
    """

    slope: int = 50
    base: int = 1000
    min_fraction: float = 0.1
    averaging: AveragingRule = "pairwise"

    def __post_init__(self):
        """Validate the configuration"""
        if self.slope < 0 or self.base < 0:
            raise DFOTRConfigError("slope and base must be non-negative")
        if not 0.0 < self.min_fraction <= 1.0:
            raise DFOTRConfigError(
                f"min_fraction must lie in (0, 1], got {self.min_fraction}"
            )
        if self.averaging not in ("running", "pairwise"):
            raise DFOTRConfigError(
                f"averaging must be 'running' or 'pairwise', got {self.averaging!r}"
            )


@dataclass
class DatasetConfig:
    """One dataset entry of the experiment configuration file."""

    name: str
    path: str
    scaling: ScalingMode = "none"
    budget: int = 100
    big: bool = False
    positive_label: str | None = None

    def __post_init__(self):
        """Validate the configuration"""
        if not self.name:
            raise DFOTRConfigError("dataset name must be provided")
        if not self.path:
            raise DFOTRConfigError(f"dataset '{self.name}' must define a path")
        if self.scaling not in ("none", "minmax", "standardize"):
            raise DFOTRConfigError(
                f"dataset '{self.name}': unknown scaling mode {self.scaling!r}"
            )
        if not isinstance(self.budget, int) or self.budget < 1:
            raise DFOTRConfigError(
                f"dataset '{self.name}': budget must be a positive integer"
            )
        if self.positive_label is not None:
            self.positive_label = str(self.positive_label)


@dataclass
class ExperimentConfig:
    """Experiment harness configuration (datasets, seeds, folds, pool width)."""

    datasets: list[DatasetConfig] = field(default_factory=list)
    seeds: list[int] = field(default_factory=lambda: [0])
    folds: int = 5
    repeats: int = 1
    workers: int = 1
    data_dir: str = "."

    def __post_init__(self):
        """Validate the configuration"""
        if self.folds < 2:
            raise DFOTRConfigError(f"folds must be at least 2, got {self.folds}")
        if self.repeats < 1:
            raise DFOTRConfigError(f"repeats must be positive, got {self.repeats}")
        if self.workers < 1:
            raise DFOTRConfigError(f"workers must be positive, got {self.workers}")
        if not self.seeds:
            raise DFOTRConfigError("at least one seed must be provided")
        if any(not isinstance(s, int) or s < 0 for s in self.seeds):
            raise DFOTRConfigError("seeds must be unsigned integers")
        names = [d.name for d in self.datasets]
        duplicates = {n for n in names if names.count(n) > 1}
        if duplicates:
            raise DFOTRConfigError(
                f"duplicate dataset names: {', '.join(sorted(duplicates))}"
            )

    def dataset(self, name: str) -> DatasetConfig:
        for entry in self.datasets:
            if entry.name == name:
                return entry
        raise DFOTRConfigError(f"dataset '{name}' is not listed in the configuration")

    def resolve_path(self, entry: DatasetConfig) -> Path:
        """Resolve a dataset path against ``data_dir`` (or ``DFO_TR_DATA_DIR``)."""
        path = Path(entry.path)
        if path.is_absolute():
            return path
        env_dir = os.environ.get("DFO_TR_DATA_DIR")
        if env_dir:
            logger.debug("Using data directory from DFO_TR_DATA_DIR: %s", env_dir)
            return Path(env_dir) / path
        return Path(self.data_dir) / path


def load_experiment_config(path: str | Path) -> ExperimentConfig:
    """Load the YAML experiment configuration.

    Relative ``data_dir`` values are resolved against the directory holding
    the configuration file.

    Raises:
        DFOTRConfigError: If the file is missing, is not valid YAML, or does
            not describe a valid experiment.
    """
    path = Path(path)
    try:
        with open(path, encoding="utf-8") as f:
            raw = yaml.safe_load(f) or {}
    except OSError as e:
        raise DFOTRConfigError(f"Failed to read experiment config {path}: {e}") from e
    except yaml.YAMLError as e:
        raise DFOTRConfigError(f"Invalid YAML in experiment config {path}: {e}") from e

    if not isinstance(raw, dict):
        raise DFOTRConfigError(f"Experiment config {path} must be a mapping")

    datasets_raw = raw.get("datasets", [])
    if not isinstance(datasets_raw, list):
        raise DFOTRConfigError("'datasets' must be a list")

    try:
        datasets = [DatasetConfig(**entry) for entry in datasets_raw]
    except TypeError as e:
        raise DFOTRConfigError(f"Invalid dataset entry in {path}: {e}") from e

    data_dir = Path(raw.get("data_dir", "."))
    if not data_dir.is_absolute():
        data_dir = path.parent / data_dir

    config = ExperimentConfig(
        datasets=datasets,
        seeds=list(raw.get("seeds", [0])),
        folds=int(raw.get("folds", 5)),
        repeats=int(raw.get("repeats", 1)),
        workers=int(raw.get("workers", 1)),
        data_dir=str(data_dir),
    )
    logger.debug(
        "Loaded experiment config %s with %d datasets", path, len(config.datasets)
    )
    return config


__all__ = [
    "SolverConfig",
    "SampleSchedule",
    "DatasetConfig",
    "ExperimentConfig",
    "make_config_defaults",
    "load_experiment_config",
]
